#pragma once

#include <spdlog/spdlog.h>

namespace tlsqkd {

/// All components log through the process default logger so an application
/// (or a test) can redirect every line by swapping one sink.
inline spdlog::logger& log() { return *spdlog::default_logger_raw(); }

}  // namespace tlsqkd
