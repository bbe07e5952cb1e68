#pragma once

#include <bitset>
#include <initializer_list>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "wisa/mopa/gating.hpp"

namespace wisa::physchema {

enum class Group { Dynamics, Thermodynamics, Optics, CameraMotion, ObjectState };

struct CategoryInfo {
  int id;  // 1-based
  std::string_view name;
  Group group;
};

struct GroupInfo {
  Group group;
  std::string_view name;
  int first_id;
  int last_id;
  std::optional<int> fallback_id;  // the "no obvious phenomenon" / "No Change" entry
};

// The 29 qualitative categories in id order.
std::span<const CategoryInfo> categories();
// The five category groups in id order.
std::span<const GroupInfo> groups();

const CategoryInfo& category(int id);
const GroupInfo& group_info(Group group);
std::string_view group_name(Group group);
bool valid_category_id(int id) noexcept;

/// Set of active qualitative categories (the binary P_c at annotation level).
class CategoryVector {
 public:
  CategoryVector() = default;
  CategoryVector(std::initializer_list<int> ids);
  static CategoryVector from_ids(std::span<const int> ids);

  void set(int id, bool active = true);
  bool test(int id) const;
  std::size_t count() const noexcept { return bits_.count(); }
  bool empty() const noexcept { return bits_.none(); }
  // Active ids, ascending.
  std::vector<int> active_ids() const;
  std::vector<int> active_in(Group group) const;

  friend bool operator==(const CategoryVector&, const CategoryVector&) = default;

 private:
  std::bitset<kNumCategories> bits_;
};

// 1.0 at active ids, 0.0 elsewhere.
mopa::GatingVector to_gating_vector(const CategoryVector& v);

}  // namespace wisa::physchema
