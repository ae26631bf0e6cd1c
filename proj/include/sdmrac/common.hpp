#ifndef SDMRAC_COMMON_HPP
#define SDMRAC_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sdmrac {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Raised when a simulated state stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t last_finite_step)
      : std::runtime_error(what), last_finite_step_(last_finite_step) {}

  std::size_t last_finite_step() const { return last_finite_step_; }

 private:
  std::size_t last_finite_step_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline std::string shape(const MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

/// Independent stream derived from a base seed and a tag.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace detail
}  // namespace sdmrac

#endif  // SDMRAC_COMMON_HPP
