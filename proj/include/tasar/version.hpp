#ifndef TASAR_VERSION_HPP
#define TASAR_VERSION_HPP

namespace tasar {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tasar

#endif  // TASAR_VERSION_HPP
