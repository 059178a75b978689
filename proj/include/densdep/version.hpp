#ifndef DENSDEP_VERSION_HPP
#define DENSDEP_VERSION_HPP

namespace densdep {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace densdep

#endif
