#ifndef LSR_VERSION_HPP
#define LSR_VERSION_HPP

namespace lsr {

inline constexpr const char* kToolName = "lsrlab";
inline constexpr const char* kToolVersion = "1.0.0";

} // namespace lsr

#endif
