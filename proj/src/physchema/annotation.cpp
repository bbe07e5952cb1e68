#include "wisa/physchema/annotation.hpp"

#include <cmath>
#include <string>

#include "wisa/errors.hpp"

namespace wisa::physchema {

namespace {

// 10^e for |e| up to ~330 without overflowing intermediates.
double scale_pow10(double v, int e) {
  if (e > 300) return scale_pow10(v * 1e300, e - 300);
  if (e < -300) return scale_pow10(v / 1e300, e + 300);
  return e >= 0 ? v * std::pow(10.0, e) : v / std::pow(10.0, -e);
}

}  // namespace

SciNotation encode_scientific(double value) {
  if (!std::isfinite(value)) throw NumericError("encode_scientific: non-finite value");
  if (value == 0.0) return {0.0, 0};
  int e = static_cast<int>(std::floor(std::log10(std::abs(value))));
  double c = scale_pow10(value, -e);
  if (std::abs(c) >= 10.0) {
    ++e;
    c = scale_pow10(value, -e);
  } else if (std::abs(c) < 1.0) {
    --e;
    c = scale_pow10(value, -e);
  }
  return {c, e};
}

double decode_scientific(const SciNotation& s) { return scale_pow10(s.coefficient, s.exponent); }
double SciNotation::value() const { return decode_scientific(*this); }

std::array<double, 10> QuantitativeProperties::flatten() const {
  const auto ce = [](const SciNotation& s) { return std::pair{s.coefficient, static_cast<double>(s.exponent)}; };
  std::array<double, 10> out{};
  const SciNotation* parts[] = {&density, &time_range.min, &time_range.max, &temperature_range.min,
                                &temperature_range.max};
  for (std::size_t i = 0; i < 5; ++i) {
    const auto [c, e] = ce(*parts[i]);
    out[2 * i] = c;
    out[2 * i + 1] = e;
  }
  return out;
}

QuantitativeProperties QuantitativeProperties::from_values(double density, double t_min, double t_max,
                                                           double temp_min, double temp_max) {
  return {encode_scientific(density),
          {encode_scientific(t_min), encode_scientific(t_max)},
          {encode_scientific(temp_min), encode_scientific(temp_max)}};
}

std::string Violation::message() const {
  std::string m = field + ": " + rule;
  if (!ids.empty()) {
    m += " (ids";
    for (int id : ids) m += " " + std::to_string(id);
    m += ")";
  }
  return m;
}

namespace {

void check_sci(const SciNotation& s, const std::string& field, std::vector<Violation>& out) {
  const double c = std::abs(s.coefficient);
  const bool canonical_zero = s.coefficient == 0.0 && s.exponent == 0;
  if (!std::isfinite(s.coefficient) || (!canonical_zero && (c < 1.0 || c >= 10.0))) {
    out.push_back({field, "scientific notation form", {}});
  }
}

void check_range(const Range& r, const std::string& field, std::vector<Violation>& out) {
  check_sci(r.min, field + "[0]", out);
  check_sci(r.max, field + "[1]", out);
  if (decode_scientific(r.min) > decode_scientific(r.max)) out.push_back({field, "range order", {}});
}

}  // namespace

std::vector<Violation> validate(const PhysicalAnnotation& a, bool strict) {
  std::vector<Violation> out;
  if (a.caption.empty()) out.push_back({"caption", "nonempty", {}});

  const auto& q = a.quantitative;
  check_sci(q.density, "quantitative.density", out);
  if (decode_scientific(q.density) < 0.0) out.push_back({"quantitative.density", "density nonnegative", {}});
  check_range(q.time_range, "quantitative.time_range", out);
  check_range(q.temperature_range, "quantitative.temperature_range", out);

  if (!strict) return out;

  for (const GroupInfo& g : groups()) {
    const auto active = a.qualitative.active_in(g.group);
    const std::string field = "qualitative." + std::string(g.name);
    if (active.empty()) {
      out.push_back({field, std::string(g.name) + " group coverage", {}});
      continue;
    }
    if (g.fallback_id && a.qualitative.test(*g.fallback_id) && active.size() > 1) {
      out.push_back({field, std::string(g.name) + " fallback exclusivity", active});
    }
    if (g.group == Group::CameraMotion && active.size() != 1) {
      out.push_back({field, "CameraMotion exactly one", active});
    }
  }
  return out;
}

nlohmann::json to_json(const PhysicalAnnotation& a) {
  const auto sci = [](const SciNotation& s) { return nlohmann::json{{"c", s.coefficient}, {"e", s.exponent}}; };
  const auto range = [&](const Range& r) { return nlohmann::json::array({sci(r.min), sci(r.max)}); };
  nlohmann::json doc;
  doc["caption"] = a.caption;
  doc["physical_description"] = a.physical_description;
  doc["qualitative"] = a.qualitative.active_ids();
  doc["quantitative"] = {{"density", sci(a.quantitative.density)},
                         {"time_range", range(a.quantitative.time_range)},
                         {"temperature_range", range(a.quantitative.temperature_range)}};
  doc["strict"] = a.strict;
  return doc;
}

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key, "missing required field");
  return *it;
}

std::string require_string(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  const auto& v = require(obj, key, path);
  if (!v.is_string()) throw ParseError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

SciNotation parse_sci(const nlohmann::json& v, const std::string& path) {
  if (!v.is_object()) throw ParseError(path, "expected {\"c\": number, \"e\": integer}");
  const auto& c = require(v, "c", path);
  const auto& e = require(v, "e", path);
  if (!c.is_number()) throw ParseError(path + ".c", "expected a number");
  if (!e.is_number_integer()) throw ParseError(path + ".e", "expected an integer");
  return {c.get<double>(), e.get<int>()};
}

Range parse_range(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ParseError(path, "expected a [min, max] pair");
  return {parse_sci(v[0], path + "[0]"), parse_sci(v[1], path + "[1]")};
}

}  // namespace

PhysicalAnnotation from_json(const nlohmann::json& doc) {
  const std::string root = "$";
  if (!doc.is_object()) throw ParseError(root, "expected an object");
  PhysicalAnnotation a;
  a.caption = require_string(doc, "caption", root);
  a.physical_description = require_string(doc, "physical_description", root);

  const auto& ids = require(doc, "qualitative", root);
  if (!ids.is_array()) throw ParseError(root + ".qualitative", "expected an array of category ids");
  int previous = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string path = root + ".qualitative[" + std::to_string(i) + "]";
    if (!ids[i].is_number_integer()) throw ParseError(path, "expected an integer category id");
    const int id = ids[i].get<int>();
    if (!valid_category_id(id)) throw ParseError(path, "unknown category id " + std::to_string(id));
    if (id <= previous) throw ParseError(path, "category ids must be strictly ascending");
    a.qualitative.set(id);
    previous = id;
  }

  const std::string qpath = root + ".quantitative";
  const auto& q = require(doc, "quantitative", root);
  a.quantitative.density = parse_sci(require(q, "density", qpath), qpath + ".density");
  a.quantitative.time_range = parse_range(require(q, "time_range", qpath), qpath + ".time_range");
  a.quantitative.temperature_range =
      parse_range(require(q, "temperature_range", qpath), qpath + ".temperature_range");

  const auto& strict = require(doc, "strict", root);
  if (!strict.is_boolean()) throw ParseError(root + ".strict", "expected a boolean");
  a.strict = strict.get<bool>();
  return a;
}

std::string serialize(const PhysicalAnnotation& a) { return to_json(a).dump(2) + "\n"; }

PhysicalAnnotation parse(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("$", std::string("malformed JSON: ") + e.what());
  }
  return from_json(doc);
}

}  // namespace wisa::physchema
