#include "hcope/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>

#include "hcope/errors.hpp"

namespace hcope {

std::string format_real(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  if (ec != std::errc{}) throw NumericError("cannot format real");
  return std::string(buf, end);
}

namespace {

struct Layout {
  bool discrete = true;
  std::size_t dim = 1;
};

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of("\t\n\r") != std::string::npos)
    throw ConfigError("identifier '" + id + "' must be non-empty without tabs or newlines");
}

Layout layout_of(const State& s) {
  if (is_discrete(s)) return {true, 1};
  return {false, state_values(s).size()};
}

Layout layout_of(const Action& a) {
  if (is_discrete(a)) return {true, 1};
  return {false, action_values(a).size()};
}

std::string layout_tag(const Layout& l) { return (l.discrete ? "d" : "c") + std::to_string(l.dim); }

void append_state(std::string& out, const State& s) {
  if (is_discrete(s)) {
    out += std::to_string(state_index(s));
    return;
  }
  bool first = true;
  for (double v : state_values(s)) {
    if (!first) out += ' ';
    out += format_real(v);
    first = false;
  }
}

void append_action(std::string& out, const Action& a) {
  if (is_discrete(a)) {
    out += std::to_string(action_index(a));
    return;
  }
  bool first = true;
  for (double v : action_values(a)) {
    if (!first) out += ' ';
    out += format_real(v);
    first = false;
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

class LineParser {
 public:
  explicit LineParser(std::size_t line) : line_(line) {}

  Layout layout(const std::string& tag) const {
    if (tag.size() < 2 || (tag[0] != 'd' && tag[0] != 'c')) fail("bad layout tag '" + tag + "'");
    Layout l{tag[0] == 'd', 0};
    const auto* first = tag.data() + 1;
    auto [ptr, ec] = std::from_chars(first, tag.data() + tag.size(), l.dim);
    if (ec != std::errc{} || ptr != tag.data() + tag.size() || l.dim == 0) fail("bad layout tag '" + tag + "'");
    if (l.discrete && l.dim != 1) fail("discrete layout must have dimension 1");
    return l;
  }

  double real(std::string_view tok) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) fail("bad number '" + std::string(tok) + "'");
    return v;
  }

  std::size_t index(std::string_view tok) const {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) fail("bad index '" + std::string(tok) + "'");
    return v;
  }

  State state(std::span<const std::string_view> toks, const Layout& l) const {
    if (l.discrete) return DiscreteState{index(toks[0])};
    ContinuousState s;
    for (std::size_t k = 0; k < l.dim; ++k) s.values.push_back(real(toks[k]));
    return s;
  }

  Action action(std::span<const std::string_view> toks, const Layout& l) const {
    if (l.discrete) return DiscreteAction{index(toks[0])};
    ContinuousAction a;
    for (std::size_t k = 0; k < l.dim; ++k) a.values.push_back(real(toks[k]));
    return a;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

 private:
  std::size_t line_;
};

}  // namespace

void write_dataset(std::ostream& out, const Dataset& ds) {
  check_id(ds.env_id);
  check_id(ds.behavior_policy_id);
  out << kDatasetSchema << '\t' << ds.env_id << '\t' << ds.behavior_policy_id << '\n';
  for (const Trajectory& traj : ds.trajectories) {
    if (traj.steps.empty()) throw ConfigError("cannot save an empty trajectory");
    const Layout sl = layout_of(traj.steps.front().state);
    const Layout al = layout_of(traj.steps.front().action);
    std::string line = ds.env_id + '\t' + ds.behavior_policy_id + '\t' + (traj.terminal ? "1" : "0") + '\t' +
                       layout_tag(sl) + '\t' + layout_tag(al) + '\t';
    bool first = true;
    for (const Step& step : traj.steps) {
      const Layout ls = layout_of(step.state), la = layout_of(step.action);
      if (ls.discrete != sl.discrete || ls.dim != sl.dim || la.discrete != al.discrete || la.dim != al.dim)
        throw ConfigError("trajectory mixes state or action layouts");
      if (!first) line += ' ';
      append_state(line, step.state);
      line += ' ';
      append_action(line, step.action);
      line += ' ';
      line += format_real(step.reward);
      first = false;
    }
    line += '\t';
    if (traj.final_state) {
      const Layout lf = layout_of(*traj.final_state);
      if (lf.discrete != sl.discrete || lf.dim != sl.dim) throw ConfigError("final state layout mismatch");
      append_state(line, *traj.final_state);
    } else {
      line += '-';
    }
    out << line << '\n';
  }
  if (!out) throw std::runtime_error("failed writing dataset");
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(line_no, "missing header");
  const auto header = split(line, '\t');
  if (header.size() != 3 || header[0] != kDatasetSchema)
    throw ParseError(line_no, "expected header '" + std::string(kDatasetSchema) + "\\t<env>\\t<behavior>'");
  Dataset ds;
  ds.env_id = header[1];
  ds.behavior_policy_id = header[2];

  while (std::getline(in, line)) {
    ++line_no;
    const LineParser p(line_no);
    // Every record written by write_dataset ends with a newline.
    if (in.eof()) p.fail("truncated record (no terminating newline)");
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 7) p.fail("expected 7 tab-separated fields, got " + std::to_string(fields.size()));
    if (fields[0] != ds.env_id) p.fail("env id '" + fields[0] + "' differs from header");
    if (fields[1] != ds.behavior_policy_id) p.fail("behavior policy id '" + fields[1] + "' differs from header");
    if (fields[2] != "0" && fields[2] != "1") p.fail("terminal flag must be 0 or 1");
    const Layout sl = p.layout(fields[3]);
    const Layout al = p.layout(fields[4]);

    Trajectory traj;
    traj.terminal = fields[2] == "1";
    const auto toks = tokens(fields[5]);
    const std::size_t stride = sl.dim + al.dim + 1;
    if (toks.empty() || toks.size() % stride != 0)
      p.fail("step array length " + std::to_string(toks.size()) + " is not a positive multiple of " +
             std::to_string(stride));
    const std::span<const std::string_view> all(toks);
    for (std::size_t off = 0; off < toks.size(); off += stride) {
      Step step;
      step.state = p.state(all.subspan(off, sl.dim), sl);
      step.action = p.action(all.subspan(off + sl.dim, al.dim), al);
      step.reward = p.real(all[off + sl.dim + al.dim]);
      traj.steps.push_back(std::move(step));
    }
    if (fields[6] != "-") {
      const auto ftoks = tokens(fields[6]);
      if (ftoks.size() != sl.dim) p.fail("final state has wrong dimension");
      traj.final_state = p.state(ftoks, sl);
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  write_dataset(out, ds);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace hcope
