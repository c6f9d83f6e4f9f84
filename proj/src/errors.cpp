#include "hcope/errors.hpp"

#include <iostream>
#include <mutex>

namespace hcope {

namespace {

std::mutex sink_mutex;
WarningSink current_sink;

}  // namespace

void set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex);
  current_sink = std::move(sink);
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex);
  if (current_sink)
    current_sink(message);
  else
    std::clog << "warning: " << message << '\n';
}

}  // namespace hcope
