#pragma once

#include <array>
#include <cstddef>

namespace wisa {

// Number of qualitative physical categories, and therefore of MoPA expert heads.
inline constexpr std::size_t kNumCategories = 29;

namespace mopa {

/// Per-category head gate, one entry per expert head, each in [0, 1].
///
/// Index i holds category id i + 1.
struct GatingVector {
  std::array<double, kNumCategories> values{};

  static GatingVector ones() {
    GatingVector g;
    g.values.fill(1.0);
    return g;
  }
  static GatingVector zeros() { return GatingVector{}; }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  static constexpr std::size_t size() { return kNumCategories; }

  friend bool operator==(const GatingVector&, const GatingVector&) = default;
};

}  // namespace mopa
}  // namespace wisa
