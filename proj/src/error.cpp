#include "compass/error.hpp"

#include <iostream>
#include <mutex>

namespace compass {
namespace {

std::mutex sink_mutex;

void to_stderr(std::string_view message) { std::cerr << "compass: warning: " << message << '\n'; }

std::function<void(std::string_view)>& sink() {
    static std::function<void(std::string_view)> s = to_stderr;
    return s;
}

} // namespace

void warn(std::string_view message) {
    std::lock_guard lock(sink_mutex);
    if (sink()) sink()(message);
}

void set_warning_sink(std::function<void(std::string_view)> s) {
    std::lock_guard lock(sink_mutex);
    sink() = s ? std::move(s) : to_stderr;
}

} // namespace compass
