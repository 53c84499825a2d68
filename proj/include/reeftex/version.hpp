#pragma once

namespace reeftex {

inline constexpr const char* kVersion = "0.3.0";
inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kModelSchemaVersion = 1;

}  // namespace reeftex
