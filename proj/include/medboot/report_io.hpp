#pragma once

#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "medboot/bootstrap.hpp"
#include "medboot/errors.hpp"
#include "medboot/estimator.hpp"
#include "medboot/simlab.hpp"

namespace medboot {

using ordered_json = nlohmann::ordered_json;

/// Report documents all share one shape: {"params": [row...], "meta": {...}}
/// where every row is an object with a "name" plus numeric fields.  The
/// renderers below work off that shape, so analyze, study, and sensitivity
/// reports all print the same way.

inline ordered_json analysis_doc(const BootstrapReport& rep,
                                 std::size_t n_imputations,
                                 std::uint64_t seed) {
  ordered_json doc;
  doc["params"] = ordered_json::array();
  const std::array<double, 8> point = rep.point.report_values();
  for (std::size_t j = 0; j < 8; ++j) {
    ordered_json row;
    row["name"] = std::string(kParamNames[j]);
    row["estimate"] = point[j];
    row["se"] = rep.se[j];
    row["ci_lo"] = rep.intervals[j].lo;
    row["ci_hi"] = rep.intervals[j].hi;
    doc["params"].push_back(std::move(row));
  }
  doc["meta"] = ordered_json{{"level", rep.level},
                             {"n_boot", rep.b_requested},
                             {"b_effective", rep.b_effective},
                             {"n_imputations", n_imputations},
                             {"seed", seed}};
  return doc;
}

inline ordered_json study_doc(const StudyReport& rep, const StudyConfig& cfg) {
  ordered_json doc;
  doc["params"] = ordered_json::array();
  for (const StudyRow& r : rep.rows) {
    ordered_json row;
    row["name"] = std::string(r.name);
    row["truth"] = r.truth;
    row["bias"] = r.bias;
    row["coverage"] = r.coverage;
    row["power_or_type1"] = r.power_or_type1;
    doc["params"].push_back(std::move(row));
  }
  doc["meta"] = ordered_json{{"mechanism", std::string(mechanism_name(cfg.mechanism))},
                             {"proportion", cfg.proportion},
                             {"use_aux", cfg.use_aux},
                             {"n", cfg.n},
                             {"replications", rep.replications_requested},
                             {"replications_used", rep.replications_used},
                             {"n_boot", cfg.n_boot},
                             {"n_imputations", cfg.n_imputations},
                             {"level", cfg.level},
                             {"seed", cfg.seed},
                             {"dropped_replicates", rep.dropped_replicates}};
  return doc;
}

inline ordered_json sensitivity_doc(const SensitivityReport& rep,
                                    const StudyConfig& cfg) {
  ordered_json doc;
  doc["params"] = ordered_json::array();
  for (const SensitivityRow& r : rep.rows) {
    ordered_json row;
    row["name"] = "K=" + std::to_string(r.k);
    row["k"] = r.k;
    row["dev_estimate"] = r.dev_estimate;
    row["dev_se"] = r.dev_se;
    doc["params"].push_back(std::move(row));
  }
  doc["meta"] = ordered_json{{"k_ref", rep.k_ref},
                             {"ref_estimate", rep.ref_estimate},
                             {"ref_se", rep.ref_se},
                             {"mechanism", std::string(mechanism_name(cfg.mechanism))},
                             {"proportion", cfg.proportion},
                             {"use_aux", cfg.use_aux},
                             {"n", cfg.n},
                             {"n_boot", cfg.n_boot},
                             {"level", cfg.level},
                             {"seed", cfg.seed}};
  return doc;
}

inline std::string render_json(const ordered_json& doc) {
  return doc.dump(2) + "\n";
}

inline ordered_json parse_json(const std::string& text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("json: ") + e.what());
  }
}

namespace detail {

/// Floats get 5 decimals (table style); everything else prints exactly.
inline std::string table_cell(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.5f", v.get<double>());
    return buf;
  }
  return v.dump();
}

/// Full-precision cell: numbers exactly as JSON would print them.
inline std::string csv_cell(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace detail

/// Aligned text table of the params rows, preceded by the meta entries.
inline std::string render_table(const ordered_json& doc) {
  std::string out;
  if (doc.contains("meta"))
    for (const auto& [key, value] : doc.at("meta").items())
      out += key + " = " + detail::csv_cell(value) + "\n";
  const auto& params = doc.at("params");
  if (params.empty()) return out;

  std::vector<std::string> header;
  for (const auto& [key, value] : params.front().items()) header.push_back(key);
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : params) {
    std::vector<std::string> line;
    for (const auto& key : header) line.push_back(detail::table_cell(row.at(key)));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto emit_row = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) out += "  ";
      const std::size_t pad = width[c] - line[c].size();
      if (c == 0) {
        out += line[c];
        if (c + 1 < line.size()) out.append(pad, ' ');
      } else {
        out.append(pad, ' ');
        out += line[c];
      }
    }
    out += '\n';
  };
  if (!out.empty()) out += '\n';
  emit_row(header);
  for (const auto& line : cells) emit_row(line);
  return out;
}

/// CSV of the params rows only (header + one line per row).
inline std::string render_csv(const ordered_json& doc) {
  const auto& params = doc.at("params");
  if (params.empty()) return "";
  std::string out;
  bool first = true;
  for (const auto& [key, value] : params.front().items()) {
    if (!first) out += ',';
    out += key;
    first = false;
  }
  out += '\n';
  for (const auto& row : params) {
    first = true;
    for (const auto& [key, value] : row.items()) {
      if (!first) out += ',';
      out += detail::csv_cell(value);
      first = false;
    }
    out += '\n';
  }
  return out;
}

}  // namespace medboot
