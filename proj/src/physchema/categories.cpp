#include "wisa/physchema/categories.hpp"

#include <array>
#include <string>

#include "wisa/errors.hpp"

namespace wisa::physchema {

namespace {

constexpr std::array<CategoryInfo, kNumCategories> kCategories{{
    {1, "Collision", Group::Dynamics},
    {2, "Rigid Body Motion", Group::Dynamics},
    {3, "Elastic Motion", Group::Dynamics},
    {4, "Liquid Motion", Group::Dynamics},
    {5, "Gas Motion", Group::Dynamics},
    {6, "Deformation", Group::Dynamics},
    {7, "No obvious dynamic phenomenon", Group::Dynamics},
    {8, "Melting", Group::Thermodynamics},
    {9, "Solidification", Group::Thermodynamics},
    {10, "Vaporization", Group::Thermodynamics},
    {11, "Liquefaction", Group::Thermodynamics},
    {12, "Explosion", Group::Thermodynamics},
    {13, "Combustion", Group::Thermodynamics},
    {14, "No obvious thermodynamic phenomenon", Group::Thermodynamics},
    {15, "Reflection", Group::Optics},
    {16, "Refraction", Group::Optics},
    {17, "Scattering", Group::Optics},
    {18, "Interference and Diffraction", Group::Optics},
    {19, "Unnatural Light Sources", Group::Optics},
    {20, "No obvious optical phenomenon", Group::Optics},
    {21, "Yes", Group::CameraMotion},
    {22, "No", Group::CameraMotion},
    {23, "Liquids Objects Appearance", Group::ObjectState},
    {24, "Solid Objects Appearance", Group::ObjectState},
    {25, "Gas Objects Appearance", Group::ObjectState},
    {26, "Object decomposition and splitting", Group::ObjectState},
    {27, "Mixing of Multiple Objects", Group::ObjectState},
    {28, "Object Disappearance", Group::ObjectState},
    {29, "No Change", Group::ObjectState},
}};

constexpr std::array<GroupInfo, 5> kGroups{{
    {Group::Dynamics, "Dynamics", 1, 7, 7},
    {Group::Thermodynamics, "Thermodynamics", 8, 14, 14},
    {Group::Optics, "Optics", 15, 20, 20},
    {Group::CameraMotion, "CameraMotion", 21, 22, std::nullopt},
    {Group::ObjectState, "ObjectState", 23, 29, 29},
}};

}  // namespace

std::span<const CategoryInfo> categories() { return kCategories; }
std::span<const GroupInfo> groups() { return kGroups; }

bool valid_category_id(int id) noexcept { return id >= 1 && id <= static_cast<int>(kNumCategories); }

const CategoryInfo& category(int id) {
  if (!valid_category_id(id)) throw UsageError("unknown category id " + std::to_string(id));
  return kCategories[static_cast<std::size_t>(id - 1)];
}

const GroupInfo& group_info(Group group) { return kGroups[static_cast<std::size_t>(group)]; }
std::string_view group_name(Group group) { return group_info(group).name; }

CategoryVector::CategoryVector(std::initializer_list<int> ids) {
  for (int id : ids) set(id);
}

CategoryVector CategoryVector::from_ids(std::span<const int> ids) {
  CategoryVector v;
  for (int id : ids) v.set(id);
  return v;
}

void CategoryVector::set(int id, bool active) {
  if (!valid_category_id(id)) throw UsageError("unknown category id " + std::to_string(id));
  bits_.set(static_cast<std::size_t>(id - 1), active);
}

bool CategoryVector::test(int id) const {
  if (!valid_category_id(id)) throw UsageError("unknown category id " + std::to_string(id));
  return bits_.test(static_cast<std::size_t>(id - 1));
}

std::vector<int> CategoryVector::active_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < kNumCategories; ++i)
    if (bits_.test(i)) ids.push_back(static_cast<int>(i) + 1);
  return ids;
}

std::vector<int> CategoryVector::active_in(Group group) const {
  const auto& g = group_info(group);
  std::vector<int> ids;
  for (int id = g.first_id; id <= g.last_id; ++id)
    if (test(id)) ids.push_back(id);
  return ids;
}

mopa::GatingVector to_gating_vector(const CategoryVector& v) {
  mopa::GatingVector g;
  for (int id : v.active_ids()) g[static_cast<std::size_t>(id - 1)] = 1.0;
  return g;
}

}  // namespace wisa::physchema
