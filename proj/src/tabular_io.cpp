#include "harmitr/tabular_io.hpp"

#include "harmitr/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace harmitr {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// Comma-separated fields with optional double quotes ("" escapes a quote).
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

int parse_binary(const std::string& text, std::size_t row, const std::string& column) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  if (text.empty() || text == "NA" || text == "nan" || text == "NaN")
    throw ValidationError("missing value in column '" + column + "' at data row " +
                              std::to_string(row),
                          row);
  throw ValidationError("column '" + column + "' must be 0 or 1, got '" + text +
                            "' at data row " + std::to_string(row),
                        row);
}

double parse_real(const std::string& text, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last)
    throw ParseError("non-numeric value '" + text + "' in column '" + column + "' at data row " +
                         std::to_string(row),
                     row, column);
  if (!std::isfinite(value))
    throw ParseError("non-finite value in column '" + column + "' at data row " +
                         std::to_string(row),
                     row, column);
  return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace

ObservationTable ObservationTable::subset(const std::vector<std::size_t>& index) const {
  ObservationTable out;
  out.covariates.resize(static_cast<Eigen::Index>(index.size()), covariates.cols());
  out.treatment.reserve(index.size());
  out.outcome.reserve(index.size());
  if (potential_outcomes) out.potential_outcomes.emplace();
  for (std::size_t r = 0; r < index.size(); ++r) {
    const auto i = index[r];
    out.covariates.row(static_cast<Eigen::Index>(r)) =
        covariates.row(static_cast<Eigen::Index>(i));
    out.treatment.push_back(treatment[i]);
    out.outcome.push_back(outcome[i]);
    if (potential_outcomes) {
      out.potential_outcomes->y0.push_back(potential_outcomes->y0[i]);
      out.potential_outcomes->y1.push_back(potential_outcomes->y1[i]);
    }
  }
  return out;
}

bool has_both_arms(const std::vector<int>& treatment) {
  bool zero = false;
  bool one = false;
  for (int a : treatment) {
    zero = zero || a == 0;
    one = one || a == 1;
  }
  return zero && one;
}

void validate(const ObservationTable& table) {
  const std::size_t n = table.n_rows();
  if (n == 0) throw ValidationError("table has no rows", 0);
  if (table.outcome.size() != n || static_cast<std::size_t>(table.covariates.rows()) != n)
    throw DimensionError("table columns have inconsistent lengths");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = i + 1;
    if (table.treatment[i] != 0 && table.treatment[i] != 1)
      throw ValidationError("treatment must be 0 or 1 at data row " + std::to_string(row), row);
    if (table.outcome[i] != 0 && table.outcome[i] != 1)
      throw ValidationError("outcome must be 0 or 1 at data row " + std::to_string(row), row);
    for (Eigen::Index j = 0; j < table.covariates.cols(); ++j) {
      if (!std::isfinite(table.covariates(static_cast<Eigen::Index>(i), j)))
        throw ValidationError("non-finite covariate at data row " + std::to_string(row), row);
    }
  }
  if (const auto& po = table.potential_outcomes) {
    if (po->y0.size() != n || po->y1.size() != n)
      throw DimensionError("potential outcome columns have inconsistent lengths");
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = i + 1;
      if ((po->y0[i] != 0 && po->y0[i] != 1) || (po->y1[i] != 0 && po->y1[i] != 1))
        throw ValidationError("potential outcomes must be 0 or 1 at data row " +
                                  std::to_string(row),
                              row);
      const int expected = table.treatment[i] == 1 ? po->y1[i] : po->y0[i];
      if (table.outcome[i] != expected)
        throw ConsistencyError("observed outcome disagrees with the potential outcome of the "
                               "received arm at data row " +
                                   std::to_string(row),
                               row);
    }
  }
}

ObservationTable load_observations(const std::filesystem::path& path, const ColumnSchema& schema) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("'" + path.string() + "' has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column_index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!column_index.emplace(header[j], j).second)
      throw SchemaError("duplicate column '" + header[j] + "' in header");
  }
  auto require = [&](const std::string& name) {
    const auto it = column_index.find(name);
    if (it == column_index.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };

  const std::size_t y_col = require(schema.outcome);
  const std::size_t a_col = require(schema.treatment);
  std::vector<std::string> x_names = schema.covariates;
  if (x_names.empty()) {
    for (std::size_t j = 1; column_index.count("x" + std::to_string(j)) != 0; ++j)
      x_names.push_back("x" + std::to_string(j));
    if (x_names.empty()) throw SchemaError("missing column 'x1'");
  }
  std::vector<std::size_t> x_cols;
  for (const auto& name : x_names) x_cols.push_back(require(name));

  const bool has_y0 = column_index.count(schema.y0) != 0;
  const bool has_y1 = column_index.count(schema.y1) != 0;
  if (has_y0 != has_y1)
    throw SchemaError("potential outcome columns '" + schema.y0 + "' and '" + schema.y1 +
                      "' must appear together");

  std::vector<double> x_values;
  ObservationTable table;
  PotentialOutcomes po;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError("data row " + std::to_string(row) + " has " +
                           std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       row, "");
    table.outcome.push_back(parse_binary(fields[y_col], row, schema.outcome));
    table.treatment.push_back(parse_binary(fields[a_col], row, schema.treatment));
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      x_values.push_back(parse_real(fields[x_cols[j]], row, x_names[j]));
    if (has_y0) {
      po.y0.push_back(parse_binary(fields[column_index[schema.y0]], row, schema.y0));
      po.y1.push_back(parse_binary(fields[column_index[schema.y1]], row, schema.y1));
    }
  }
  if (row == 0) throw ValidationError("'" + path.string() + "' has no data rows", 0);

  const auto d = static_cast<Eigen::Index>(x_cols.size());
  table.covariates = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                    Eigen::RowMajor>>(
      x_values.data(), static_cast<Eigen::Index>(row), d);
  if (has_y0) table.potential_outcomes = std::move(po);
  validate(table);
  return table;
}

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

double round12(double value) {
  if (!std::isfinite(value) || value == 0.0) return value == 0.0 ? 0.0 : value;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return std::strtod(buf, nullptr);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_observations(const ObservationTable& table, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "y,a";
  for (std::size_t j = 1; j <= table.dim(); ++j) os << ",x" << j;
  if (table.potential_outcomes) os << ",y0,y1";
  os << '\n';
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    os << table.outcome[i] << ',' << table.treatment[i];
    for (Eigen::Index j = 0; j < table.covariates.cols(); ++j)
      os << ',' << format_real(table.covariates(static_cast<Eigen::Index>(i), j));
    if (const auto& po = table.potential_outcomes) os << ',' << po->y0[i] << ',' << po->y1[i];
    os << '\n';
  }
  write_text(path, os.str());
}

Decisions load_decisions(const std::filesystem::path& path, const std::string& column) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("'" + path.string() + "' has no header row");
  const auto header = split_csv_line(line);
  std::size_t col = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == column) {
      if (col != header.size()) throw SchemaError("duplicate column '" + column + "' in header");
      col = j;
    }
  }
  if (col == header.size()) throw SchemaError("missing column '" + column + "'");
  Decisions out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError("data row " + std::to_string(row) + " has the wrong number of fields",
                       row, "");
    out.push_back(parse_binary(fields[col], row, column));
  }
  return out;
}

void write_decisions(const Decisions& decisions, const std::filesystem::path& path) {
  std::string s = "decision\n";
  s.reserve(9 + 2 * decisions.size());
  for (int d : decisions) {
    s += d ? '1' : '0';
    s += '\n';
  }
  write_text(path, s);
}

ReportFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? ReportFormat::csv : ReportFormat::json;
}

namespace {

using Json = nlohmann::ordered_json;

Json real(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round12(v);
}

Json optional_real(const std::optional<double>& v) { return v ? real(*v) : Json(nullptr); }

std::string csv_field(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"reward_empirical", "reward_model", "thr1",
                                                 "thr2", "thr3", "harm_empirical",
                                                 "proportion_treated"};
  return names;
}

std::string join_reals(const std::vector<double>& values, char sep) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += sep;
    s += format_real(values[i]);
  }
  return s;
}

}  // namespace

void write_report(const EvaluationReport& r, const std::filesystem::path& path,
                  ReportFormat format) {
  if (format == ReportFormat::json) {
    Json j;
    j["method"] = r.method;
    j["lambda"] = real(r.lambda);
    j["reward_empirical"] = optional_real(r.reward_empirical);
    j["reward_model"] = real(r.reward_model);
    j["thr1"] = real(r.thr1);
    j["thr2"] = real(r.thr2);
    j["thr3"] = real(r.thr3);
    j["harm_empirical"] = optional_real(r.harm_empirical);
    j["proportion_treated"] = real(r.proportion_treated);
    Json betas = Json::array();
    for (double b : r.beta_hat) betas.push_back(real(b));
    j["beta_hat"] = betas;
    j["evaluation_fits"] = r.evaluation_fits;
    if (!r.ci.empty()) {
      j["ci_level"] = optional_real(r.ci_level);
      j["bootstrap_replicates"] = r.bootstrap_replicates;
      j["bootstrap_redraws"] = r.bootstrap_redraws;
      Json ci = Json::object();
      for (const auto& name : metric_names()) {
        const auto it = r.ci.find(name);
        if (it == r.ci.end()) continue;
        ci[name] = Json{{"lower", real(it->second.lower)}, {"upper", real(it->second.upper)}};
      }
      j["ci"] = ci;
    }
    write_text(path, j.dump(2) + "\n");
    return;
  }

  std::string head = "method,lambda,reward_empirical,reward_model,thr1,thr2,thr3,harm_empirical,"
                     "proportion_treated,beta_hat,evaluation_fits";
  std::string row = csv_escape(r.method) + ',' + format_real(r.lambda) + ',' +
                    csv_field(r.reward_empirical) + ',' + format_real(r.reward_model) + ',' +
                    format_real(r.thr1) + ',' + format_real(r.thr2) + ',' + format_real(r.thr3) +
                    ',' + csv_field(r.harm_empirical) + ',' + format_real(r.proportion_treated) +
                    ',' + join_reals(r.beta_hat, ';') + ',' + r.evaluation_fits;
  if (!r.ci.empty()) {
    head += ",ci_level,bootstrap_replicates,bootstrap_redraws";
    row += ',' + csv_field(r.ci_level) + ',' + std::to_string(r.bootstrap_replicates) + ',' +
           std::to_string(r.bootstrap_redraws);
    for (const auto& name : metric_names()) {
      head += ',' + name + "_lower," + name + "_upper";
      const auto it = r.ci.find(name);
      if (it == r.ci.end()) {
        row += ",,";
      } else {
        row += ',' + format_real(it->second.lower) + ',' + format_real(it->second.upper);
      }
    }
  }
  write_text(path, head + '\n' + row + '\n');
}

void write_report(const StudySummary& s, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::json) {
    Json j;
    j["delta"] = real(s.delta);
    j["n"] = s.n;
    j["lambda"] = real(s.lambda);
    j["folds"] = s.K;
    j["replications"] = s.replications;
    j["seed"] = s.seed;
    Json methods = Json::array();
    for (const auto& m : s.methods) {
      Json e;
      e["method"] = m.method;
      e["replicates"] = m.replicates;
      e["failures"] = m.failures;
      e["harm"] = Json{{"mean", real(m.harm_mean)}, {"sd", real(m.harm_sd)},
                       {"q1", real(m.harm_q1)},     {"median", real(m.harm_median)},
                       {"q3", real(m.harm_q3)}};
      e["reward"] = Json{{"mean", real(m.reward_mean)}, {"sd", real(m.reward_sd)},
                         {"q1", real(m.reward_q1)},     {"median", real(m.reward_median)},
                         {"q3", real(m.reward_q3)}};
      e["proportion_treated_mean"] = real(m.proportion_treated_mean);
      e["plugin_harm_mean"] = real(m.plugin_harm_mean);
      e["plugin_violations"] = m.plugin_violations;
      methods.push_back(e);
    }
    j["methods"] = methods;
    write_text(path, j.dump(2) + "\n");
    return;
  }

  std::ostringstream os;
  os << "method,delta,n,lambda,folds,replications,seed,replicates,failures,harm_mean,harm_sd,"
        "harm_q1,harm_median,harm_q3,reward_mean,reward_sd,reward_q1,reward_median,reward_q3,"
        "proportion_treated_mean,plugin_harm_mean,plugin_violations\n";
  for (const auto& m : s.methods) {
    os << csv_escape(m.method) << ',' << format_real(s.delta) << ',' << s.n << ','
       << format_real(s.lambda) << ',' << s.K << ',' << s.replications << ',' << s.seed << ','
       << m.replicates << ',' << m.failures << ',' << format_real(m.harm_mean) << ','
       << format_real(m.harm_sd) << ',' << format_real(m.harm_q1) << ','
       << format_real(m.harm_median) << ',' << format_real(m.harm_q3) << ','
       << format_real(m.reward_mean) << ',' << format_real(m.reward_sd) << ','
       << format_real(m.reward_q1) << ',' << format_real(m.reward_median) << ','
       << format_real(m.reward_q3) << ',' << format_real(m.proportion_treated_mean) << ','
       << format_real(m.plugin_harm_mean) << ',' << m.plugin_violations << '\n';
  }
  write_text(path, os.str());
}

}  // namespace harmitr
