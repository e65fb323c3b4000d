#pragma once

// Model artifact files: one JSON document with a "type" tag, the model
// parameters at full double precision and the fitting configuration.

#include <heart/anchors.hpp>
#include <heart/edit.hpp>
#include <heart/error.hpp>
#include <heart/file_io.hpp>
#include <heart/kent.hpp>
#include <heart/model_selection.hpp>
#include <heart/movmf.hpp>
#include <heart/probes.hpp>
#include <heart/vmf.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace heart
{

using json = nlohmann::json;

/// How a model was produced; both fields are optional for hand-built models.
struct FitConfig {
  std::optional<std::uint64_t> seed;
  std::optional<long long> sample_count;
};

using Model = std::variant<VmfModel, MovmfModel, KentModel, ConceptAnchor, AttributeDirection>;

struct ModelArtifact {
  Model model;
  FitConfig config;
};

namespace detail
{

[[noreturn]] inline void schema_error(const std::string& what)
{
  throw Error(ErrorCode::SchemaViolation, "read_model", what);
}

inline const json& field(const json& j, const char* key)
{
  if (!j.is_object() || !j.contains(key)) {
    schema_error(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

inline double number_field(const json& j, const char* key)
{
  const json& v = field(j, key);
  if (!v.is_number()) {
    schema_error(std::string("field '") + key + "' must be a number");
  }
  return v.get<double>();
}

inline std::string string_field(const json& j, const char* key)
{
  const json& v = field(j, key);
  if (!v.is_string()) {
    schema_error(std::string("field '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

inline bool bool_field(const json& j, const char* key)
{
  const json& v = field(j, key);
  if (!v.is_boolean()) {
    schema_error(std::string("field '") + key + "' must be a boolean");
  }
  return v.get<bool>();
}

inline Vector vector_field(const json& j, const char* key)
{
  const json& v = field(j, key);
  if (!v.is_array()) {
    schema_error(std::string("field '") + key + "' must be an array");
  }
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      schema_error(std::string("field '") + key + "' must hold numbers");
    }
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

inline Direction direction_field(const json& j, const char* key)
{
  try {
    return Direction{vector_field(j, key)};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaViolation) {
      throw;
    }
    schema_error(std::string("field '") + key + "' is not a unit vector: " + e.what());
  }
}

inline json vector_json(const Vector& v)
{
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace detail

inline json to_json(const VmfModel& m)
{
  return {{"type", "vmf"},
          {"dim", m.dim()},
          {"mu", detail::vector_json(m.mu.coords())},
          {"kappa", m.kappa},
          {"mean_resultant", m.mean_resultant}};
}

inline json to_json(const MovmfModel& m)
{
  json comps = json::array();
  for (const auto& c : m.components) {
    comps.push_back({{"weight", c.weight},
                     {"mu", detail::vector_json(c.model.mu.coords())},
                     {"kappa", c.model.kappa},
                     {"mean_resultant", c.model.mean_resultant}});
  }
  return {{"type", "movmf"}, {"dim", m.dim()}, {"components", comps}};
}

inline json to_json(const KentModel& m)
{
  return {{"type", "kent"},
          {"dim", m.dim()},
          {"mu", detail::vector_json(m.mu.coords())},
          {"gamma1", detail::vector_json(m.gamma1.coords())},
          {"gamma2", detail::vector_json(m.gamma2.coords())},
          {"kappa", m.kappa},
          {"beta", m.beta}};
}

inline json to_json(const ConceptAnchor& a)
{
  json model = to_json(a.model);
  return {{"type", "concept_anchor"},
          {"concept", a.concept_name},
          {"role", to_string(a.role)},
          {"model", model},
          {"norm_mean", a.source_norm_stats.mean},
          {"norm_std", a.source_norm_stats.std},
          {"sample_count", a.sample_count}};
}

inline json to_json(const AttributeDirection& d)
{
  return {{"type", "attribute_direction"},
          {"concept", d.concept_name},
          {"negative", d.negative},
          {"positive", d.positive},
          {"base", detail::vector_json(d.base.coords())},
          {"d_a", detail::vector_json(d.d_a.coords())},
          {"raw_delta", detail::vector_json(d.raw_delta)},
          {"tangent_delta", detail::vector_json(d.tangent_delta)},
          {"theta_to_target", d.theta_to_target}};
}

inline VmfModel vmf_from_json(const json& j)
{
  return VmfModel{detail::direction_field(j, "mu"), detail::number_field(j, "kappa"),
                  j.contains("mean_resultant") ? detail::number_field(j, "mean_resultant") : 1.0};
}

inline MovmfModel movmf_from_json(const json& j)
{
  const json& comps = detail::field(j, "components");
  if (!comps.is_array() || comps.empty()) {
    detail::schema_error("'components' must be a non-empty array");
  }
  MovmfModel m;
  for (const auto& c : comps) {
    m.components.push_back({detail::number_field(c, "weight"), vmf_from_json(c)});
  }
  try {
    validate(m, "read_model");
  } catch (const Error& e) {
    detail::schema_error(e.what());
  }
  return m;
}

inline KentModel kent_from_json(const json& j)
{
  KentModel m{detail::direction_field(j, "mu"), detail::number_field(j, "kappa"), detail::number_field(j, "beta"),
              detail::direction_field(j, "gamma1"), detail::direction_field(j, "gamma2")};
  try {
    validate(m, "read_model");
  } catch (const Error& e) {
    detail::schema_error(e.what());
  }
  return m;
}

inline ConceptAnchor anchor_from_json(const json& j)
{
  Role role = Role::subject;
  try {
    role = role_from_string(detail::string_field(j, "role"));
  } catch (const Error& e) {
    detail::schema_error(e.what());
  }
  const json& count = detail::field(j, "sample_count");
  if (!count.is_number_integer()) {
    detail::schema_error("'sample_count' must be an integer");
  }
  return ConceptAnchor{detail::string_field(j, "concept"), role, kent_from_json(detail::field(j, "model")),
                       {detail::number_field(j, "norm_mean"), detail::number_field(j, "norm_std")},
                       count.get<long long>()};
}

inline AttributeDirection attribute_from_json(const json& j)
{
  AttributeDirection d{detail::direction_field(j, "base"),
                       detail::direction_field(j, "d_a"),
                       detail::vector_field(j, "raw_delta"),
                       detail::vector_field(j, "tangent_delta"),
                       detail::number_field(j, "theta_to_target"),
                       detail::string_field(j, "concept"),
                       detail::string_field(j, "negative"),
                       detail::string_field(j, "positive")};
  detail::require_same_dim(d.base.dim(), d.d_a.dim(), "read_model");
  return d;
}

inline json to_json(const ModelArtifact& a)
{
  json j = std::visit([](const auto& m) { return to_json(m); }, a.model);
  json fit = json::object();
  fit["seed"] = a.config.seed ? json(*a.config.seed) : json(nullptr);
  fit["sample_count"] = a.config.sample_count ? json(*a.config.sample_count) : json(nullptr);
  j["fit"] = fit;
  return j;
}

inline ModelArtifact artifact_from_json(const json& j)
{
  if (!j.is_object()) {
    detail::schema_error("document must be an object");
  }
  const std::string type = detail::string_field(j, "type");
  ModelArtifact out{VmfModel{Direction::axis(2, 0), 0.0, 1.0}, {}};
  if (type == "vmf") {
    out.model = vmf_from_json(j);
  } else if (type == "movmf") {
    out.model = movmf_from_json(j);
  } else if (type == "kent") {
    out.model = kent_from_json(j);
  } else if (type == "concept_anchor") {
    out.model = anchor_from_json(j);
  } else if (type == "attribute_direction") {
    out.model = attribute_from_json(j);
  } else {
    throw Error(ErrorCode::UnknownTypeTag, "read_model", "type '" + type + "'");
  }
  if (j.contains("fit")) {
    const json& fit = j.at("fit");
    if (!fit.is_object()) {
      detail::schema_error("'fit' must be an object");
    }
    if (fit.contains("seed") && !fit.at("seed").is_null()) {
      if (!fit.at("seed").is_number_unsigned()) {
        detail::schema_error("'fit.seed' must be a non-negative integer");
      }
      out.config.seed = fit.at("seed").get<std::uint64_t>();
    }
    if (fit.contains("sample_count") && !fit.at("sample_count").is_null()) {
      if (!fit.at("sample_count").is_number_integer()) {
        detail::schema_error("'fit.sample_count' must be an integer");
      }
      out.config.sample_count = fit.at("sample_count").get<long long>();
    }
  }
  return out;
}

inline std::string encode_model(const ModelArtifact& a)
{
  try {
    return to_json(a).dump(2) + "\n";
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, "write_model", e.what());
  }
}

inline ModelArtifact decode_model(const std::string& text)
{
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    detail::schema_error(std::string("not JSON: ") + e.what());
  }
  return artifact_from_json(j);
}

inline void write_model(const std::filesystem::path& path, const ModelArtifact& a)
{
  io::write_file_atomic(path, encode_model(a));
}

inline ModelArtifact read_model(const std::filesystem::path& path)
{
  return decode_model(io::read_file(path));
}

/// Extracts one alternative or throws SchemaViolation naming what was found.
template <class T>
const T& model_as(const ModelArtifact& a, const char* expected)
{
  if (const T* p = std::get_if<T>(&a.model)) {
    return *p;
  }
  const std::string found = std::visit([](const auto& m) { return to_json(m).at("type").template get<std::string>(); },
                                       a.model);
  throw Error(ErrorCode::SchemaViolation, "read_model",
              std::string("expected a ") + expected + " artifact, found " + found);
}

inline json to_json(const EditPlan& p)
{
  json weights = json::object();
  for (const auto& [pos, w] : p.per_token_weight) {
    weights[std::to_string(pos)] = w;
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"lambda", p.lambda},
          {"tau", p.tau},
          {"per_token_weight", weights},
          {"inject_fraction", p.inject_fraction},
          {"edit_eot", p.edit_eot},
          {"edit_pad", p.edit_pad},
          {"propagate_downstream", p.propagate_downstream},
          {"propagate_upstream", p.propagate_upstream},
          {"subject_lambda", opt(p.subject_lambda)},
          {"eot_lambda", opt(p.eot_lambda)},
          {"pad_lambda", opt(p.pad_lambda)}};
}

/// Missing keys keep their defaults; present keys must have the right type.
inline EditPlan plan_from_json(const json& j, EditPlan base = {})
{
  if (!j.is_object()) {
    detail::schema_error("plan must be an object");
  }
  auto num = [&](const char* key, double& dst) {
    if (j.contains(key)) {
      dst = detail::number_field(j, key);
    }
  };
  auto flag = [&](const char* key, bool& dst) {
    if (j.contains(key)) {
      dst = detail::bool_field(j, key);
    }
  };
  auto opt = [&](const char* key, std::optional<double>& dst) {
    if (j.contains(key)) {
      dst = j.at(key).is_null() ? std::nullopt : std::optional<double>(detail::number_field(j, key));
    }
  };
  num("lambda", base.lambda);
  num("tau", base.tau);
  num("inject_fraction", base.inject_fraction);
  flag("edit_eot", base.edit_eot);
  flag("edit_pad", base.edit_pad);
  flag("propagate_downstream", base.propagate_downstream);
  flag("propagate_upstream", base.propagate_upstream);
  opt("subject_lambda", base.subject_lambda);
  opt("eot_lambda", base.eot_lambda);
  opt("pad_lambda", base.pad_lambda);
  if (j.contains("per_token_weight")) {
    const json& w = j.at("per_token_weight");
    if (!w.is_object()) {
      detail::schema_error("'per_token_weight' must map positions to weights");
    }
    base.per_token_weight.clear();
    for (const auto& [key, value] : w.items()) {
      Index pos = 0;
      try {
        std::size_t used = 0;
        pos = std::stoll(key, &used);
        if (used != key.size()) {
          throw std::invalid_argument(key);
        }
      } catch (const std::exception&) {
        detail::schema_error("per_token_weight key '" + key + "' is not a position");
      }
      if (!value.is_number()) {
        detail::schema_error("per_token_weight values must be numbers");
      }
      base.per_token_weight[pos] = value.get<double>();
    }
  }
  return base;
}

inline json to_json(const FitReport& r)
{
  json cands = json::array();
  for (const auto& c : r.candidates) {
    json entry = {{"model", c.tag}, {"ok", c.ok}, {"param_count", c.param_count}};
    if (c.ok) {
      entry["log_likelihood"] = c.log_likelihood;
      entry["bic"] = c.bic;
    } else {
      entry["error"] = c.error;
    }
    cands.push_back(entry);
  }
  json out = {{"sample_count", r.sample_count},
              {"dim", r.dim},
              {"movmf_components", r.movmf_components},
              {"seed", r.seed},
              {"candidates", cands},
              {"winner", r.winner}};
  out["anisotropy_ratio"] = std::isfinite(r.anisotropy_ratio) ? json(r.anisotropy_ratio) : json(nullptr);
  return out;
}

inline std::string fit_report_csv_header()
{
  return "concept,encoder,BIC_vmf,BIC_movmf,BIC_kent,beta_over_kappa\n";
}

/// One table row; failed candidates print as "nan".
inline std::string fit_report_csv_row(const FitReport& r, const std::string& concept_name, const std::string& encoder)
{
  auto bic_of = [&](const char* tag) {
    const auto& c = r.candidate(tag);
    return csv::number(c.ok ? c.bic : std::numeric_limits<double>::quiet_NaN());
  };
  return csv::field(concept_name) + ',' + csv::field(encoder) + ',' + bic_of("vmf") + ',' + bic_of("movmf") + ',' +
         bic_of("kent") + ',' + csv::number(r.anisotropy_ratio) + '\n';
}

}  // namespace heart
