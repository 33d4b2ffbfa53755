#include "cvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "cvae/text_io.hpp"

namespace cvae::data {
namespace {

constexpr int kPipelineFormatVersion = 1;
constexpr int kMatrixFormatVersion = 1;

// Whitespace-separated tokens; double quotes group, backslash escapes inside.
std::vector<std::string> tokenize(const std::string& line, std::size_t line_number) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size() || line[i] == '#') break;
    std::string token;
    if (line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        const char c = line[i++];
        if (c == '\\' && i < line.size()) {
          token += line[i++];
        } else if (c == '"') {
          closed = true;
          break;
        } else {
          token += c;
        }
      }
      if (!closed) throw ParseError(line_number, "unterminated quoted token");
    } else {
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) token += line[i++];
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

std::string quote(const std::string& token) {
  std::string out = "\"";
  for (char c : token) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

FeatureKind kind_from_keyword(const std::string& keyword, std::size_t line) {
  if (keyword == "numerical") return FeatureKind::kNumerical;
  if (keyword == "categorical") return FeatureKind::kCategorical;
  if (keyword == "ordinal") return FeatureKind::kOrdinal;
  if (keyword == "drop") return FeatureKind::kDrop;
  throw ParseError(line, "unknown schema directive '" + keyword + "'");
}

double parse_cell(const RawTable& table, std::size_t row, std::size_t col) {
  try {
    const double value = parse_double(table.rows[row][col]);
    if (!std::isfinite(value)) throw InputError("non-finite");
    return value;
  } catch (const InputError&) {
    throw ParseError(table.lines[row], "column '" + table.header[col] +
                                           "': expected a number, found '" +
                                           table.rows[row][col] + "'");
  }
}

// Checks that the schema and the CSV header describe the same columns.
void check_columns(const RawTable& table, const Schema& schema) {
  if (!table.has_column(schema.label)) {
    throw UnknownColumn("label column '" + schema.label + "' not found in CSV header");
  }
  for (const auto& name : table.header) {
    if (name != schema.label && schema.find(name) == nullptr) {
      throw UnknownColumn("CSV column '" + name + "' is not described by the schema");
    }
  }
  for (const auto& spec : schema.columns) table.column_index(spec.name);
}

}  // namespace

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kNumerical: return "numerical";
    case FeatureKind::kCategorical: return "categorical";
    case FeatureKind::kOrdinal: return "ordinal";
    case FeatureKind::kDrop: return "drop";
  }
  return "drop";
}

const FeatureSpec* Schema::find(const std::string& name) const {
  for (const auto& spec : columns) {
    if (spec.name == name) return &spec;
  }
  return nullptr;
}

Schema parse_schema(std::istream& in) {
  Schema schema;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto tokens = tokenize(line, line_number);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) throw ParseError(line_number, "directive needs a column name");
    const std::string& name = tokens[1];
    if (!seen.insert(name).second) throw ParseError(line_number, "column '" + name + "' declared twice");
    if (tokens[0] == "label") {
      if (!schema.label.empty()) throw ParseError(line_number, "more than one label column");
      schema.label = name;
      for (std::size_t i = 2; i < tokens.size(); ++i) {
        const auto eq = tokens[i].find('=');
        const std::string key = tokens[i].substr(0, eq);
        if (eq == std::string::npos || (key != "positive" && key != "negative")) {
          throw ParseError(line_number, "unknown label option '" + tokens[i] + "'");
        }
        (key == "positive" ? schema.positive : schema.negative) = tokens[i].substr(eq + 1);
      }
      continue;
    }
    FeatureSpec spec;
    spec.name = name;
    spec.kind = kind_from_keyword(tokens[0], line_number);
    if (spec.kind == FeatureKind::kOrdinal) {
      spec.categories.assign(tokens.begin() + 2, tokens.end());
      if (spec.categories.empty()) throw ParseError(line_number, "ordinal needs at least one level");
      std::set<std::string> unique(spec.categories.begin(), spec.categories.end());
      if (unique.size() != spec.categories.size()) {
        throw ParseError(line_number, "duplicate ordinal level for '" + name + "'");
      }
    } else if (tokens.size() > 2) {
      throw ParseError(line_number, "unexpected tokens after column name");
    }
    schema.columns.push_back(std::move(spec));
  }
  if (schema.label.empty()) throw ConfigError("schema declares no label column");
  return schema;
}

Schema read_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schema file '" + path + "'");
  return parse_schema(in);
}

std::size_t RawTable::column_index(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw UnknownColumn("column '" + name + "' not found in CSV header");
  return static_cast<std::size_t>(it - header.begin());
}

bool RawTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

RawTable parse_csv(std::istream& in, char delimiter) {
  RawTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto finish_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    const bool blank = record.size() == 1 && record[0].empty() && !field_started;
    if (!blank) {
      if (table.header.empty()) {
        table.header = std::move(record);
        for (auto& name : table.header) name = trim(name);
      } else {
        if (record.size() != table.header.size()) {
          throw ParseError(record_line, "expected " + std::to_string(table.header.size()) +
                                            " fields, found " + std::to_string(record.size()));
        }
        table.rows.push_back(std::move(record));
        table.lines.push_back(record_line);
      }
    }
    record.clear();
    field_started = false;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      record.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (c == '\n') {
      finish_record();
      ++line;
      record_line = line;
    } else if (c != '\r') {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError(record_line, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) finish_record();
  if (table.header.empty()) throw ParseError(1, "missing CSV header row");
  return table;
}

RawTable read_csv(const std::string& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open CSV file '" + path + "'");
  return parse_csv(in, delimiter);
}

void write_csv(std::ostream& out, const RawTable& table) {
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out << ',';
      const auto& f = fields[i];
      if (f.find_first_of(",\"\n") != std::string::npos) {
        out << '"';
        for (char c : f) out << (c == '"' ? "\"\"" : std::string(1, c));
        out << '"';
      } else {
        out << f;
      }
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
}

std::vector<int> extract_labels(const RawTable& table, const Schema& schema) {
  const std::size_t col = table.column_index(schema.label);
  std::vector<int> labels;
  labels.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string value = trim(table.rows[r][col]);
    if (value == schema.positive) {
      labels.push_back(1);
    } else if (value == schema.negative) {
      labels.push_back(0);
    } else {
      throw ParseError(table.lines[r], "label '" + value + "' is neither '" + schema.positive +
                                           "' nor '" + schema.negative + "'");
    }
  }
  return labels;
}

Pipeline Pipeline::fit(const RawTable& table, const Schema& schema) {
  check_columns(table, schema);
  const std::vector<int> labels = extract_labels(table, schema);
  std::vector<std::size_t> genuine;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == 0) genuine.push_back(r);
  }
  if (genuine.empty()) throw EmptyTraining("no class-0 rows to fit the pipeline on");

  Pipeline pipeline;
  pipeline.schema_ = schema;
  for (const auto& declared : schema.columns) {
    FeatureSpec spec = declared;
    const std::size_t col = table.column_index(spec.name);
    if (spec.kind == FeatureKind::kNumerical) {
      spec.min = parse_cell(table, genuine.front(), col);
      spec.max = spec.min;
      for (std::size_t r : genuine) {
        const double v = parse_cell(table, r, col);
        spec.min = std::min(spec.min, v);
        spec.max = std::max(spec.max, v);
      }
    } else if (spec.kind == FeatureKind::kCategorical) {
      // First-appearance order over the class-0 rows.
      std::set<std::string> seen;
      for (std::size_t r : genuine) {
        std::string value = trim(table.rows[r][col]);
        if (seen.insert(value).second) spec.categories.push_back(std::move(value));
      }
    }
    pipeline.specs_.push_back(std::move(spec));
  }
  return pipeline;
}

Eigen::MatrixXd Pipeline::transform(const RawTable& table) const {
  std::vector<std::size_t> indices;
  for (const auto& spec : specs_) indices.push_back(table.column_index(spec.name));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.rows.size()), width());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Eigen::Index c = 0;
    for (std::size_t s = 0; s < specs_.size(); ++s) {
      const FeatureSpec& spec = specs_[s];
      const auto row = static_cast<Eigen::Index>(r);
      switch (spec.kind) {
        case FeatureKind::kNumerical: {
          const double v = parse_cell(table, r, indices[s]);
          const double range = spec.max - spec.min;
          out(row, c++) = range > 0.0 ? std::clamp((v - spec.min) / range, 0.0, 1.0) : 0.0;
          break;
        }
        case FeatureKind::kCategorical: {
          const std::string value = trim(table.rows[r][indices[s]]);
          const auto it = std::find(spec.categories.begin(), spec.categories.end(), value);
          if (it != spec.categories.end()) {
            out(row, c + (it - spec.categories.begin())) = 1.0;
          }
          c += static_cast<Eigen::Index>(spec.categories.size());
          break;
        }
        case FeatureKind::kOrdinal: {
          const std::string value = trim(table.rows[r][indices[s]]);
          const auto it = std::find(spec.categories.begin(), spec.categories.end(), value);
          if (it == spec.categories.end()) {
            throw ParseError(table.lines[r], "column '" + spec.name + "': level '" + value +
                                                 "' is not declared in the schema");
          }
          const auto levels = static_cast<double>(spec.categories.size());
          out(row, c++) =
              levels > 1 ? static_cast<double>(it - spec.categories.begin()) / (levels - 1) : 0.0;
          break;
        }
        case FeatureKind::kDrop: break;
      }
    }
  }
  return out;
}

std::vector<std::string> Pipeline::encoded_columns() const {
  std::vector<std::string> names;
  for (const auto& spec : specs_) {
    switch (spec.kind) {
      case FeatureKind::kNumerical:
      case FeatureKind::kOrdinal: names.push_back(spec.name); break;
      case FeatureKind::kCategorical:
        for (const auto& category : spec.categories) names.push_back(spec.name + "=" + category);
        break;
      case FeatureKind::kDrop: break;
    }
  }
  return names;
}

Eigen::Index Pipeline::width() const {
  Eigen::Index w = 0;
  for (const auto& spec : specs_) {
    if (spec.kind == FeatureKind::kCategorical) {
      w += static_cast<Eigen::Index>(spec.categories.size());
    } else if (spec.kind != FeatureKind::kDrop) {
      ++w;
    }
  }
  return w;
}

std::string Pipeline::serialize() const {
  std::ostringstream out;
  out << "cvae-pipeline " << kPipelineFormatVersion << '\n';
  out << "label " << quote(schema_.label) << ' ' << quote(schema_.positive) << ' '
      << quote(schema_.negative) << '\n';
  for (const auto& spec : specs_) {
    out << to_string(spec.kind) << ' ' << quote(spec.name);
    if (spec.kind == FeatureKind::kNumerical) {
      out << ' ' << format_double(spec.min) << ' ' << format_double(spec.max);
    } else if (spec.kind == FeatureKind::kCategorical || spec.kind == FeatureKind::kOrdinal) {
      out << ' ' << spec.categories.size();
      for (const auto& category : spec.categories) out << ' ' << quote(category);
    }
    out << '\n';
  }
  out << "end\n";
  return out.str();
}

Pipeline Pipeline::deserialize(std::istream& in) {
  Pipeline pipeline;
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  bool ended = false;
  while (!ended && std::getline(in, line)) {
    ++line_number;
    const auto tokens = tokenize(line, line_number);
    if (tokens.empty()) continue;
    if (!header_seen) {
      if (tokens.size() != 2 || tokens[0] != "cvae-pipeline" ||
          parse_integer(tokens[1]) != kPipelineFormatVersion) {
        throw ParseError(line_number, "not a cvae-pipeline v1 file");
      }
      header_seen = true;
      continue;
    }
    if (tokens[0] == "end") {
      ended = true;
    } else if (tokens[0] == "label") {
      if (tokens.size() != 4) throw ParseError(line_number, "malformed label line");
      pipeline.schema_.label = tokens[1];
      pipeline.schema_.positive = tokens[2];
      pipeline.schema_.negative = tokens[3];
    } else {
      if (tokens.size() < 2) throw ParseError(line_number, "malformed feature line");
      FeatureSpec spec;
      spec.kind = kind_from_keyword(tokens[0], line_number);
      spec.name = tokens[1];
      if (spec.kind == FeatureKind::kNumerical) {
        if (tokens.size() != 4) throw ParseError(line_number, "numerical needs min and max");
        spec.min = parse_double(tokens[2]);
        spec.max = parse_double(tokens[3]);
      } else if (spec.kind != FeatureKind::kDrop) {
        if (tokens.size() < 3) throw ParseError(line_number, "missing category count");
        const auto count = static_cast<std::size_t>(parse_integer(tokens[2]));
        if (tokens.size() != 3 + count) throw ParseError(line_number, "category count mismatch");
        spec.categories.assign(tokens.begin() + 3, tokens.end());
      }
      FeatureSpec declared = spec;
      if (declared.kind == FeatureKind::kCategorical) declared.categories.clear();
      declared.min = declared.max = 0.0;
      pipeline.schema_.columns.push_back(std::move(declared));
      pipeline.specs_.push_back(std::move(spec));
    }
  }
  if (!ended) throw ParseError(line_number, "pipeline file truncated (no 'end')");
  return pipeline;
}

std::string Pipeline::id() const { return hex64(fnv1a64(serialize())); }

OneClassSplit split_one_class(const RawTable& table, const Schema& schema) {
  check_columns(table, schema);
  const std::vector<int> labels = extract_labels(table, schema);
  RawTable genuine{table.header, {}, {}};
  RawTable fraud{table.header, {}, {}};
  for (std::size_t r = 0; r < labels.size(); ++r) {
    RawTable& side = labels[r] == 0 ? genuine : fraud;
    side.rows.push_back(table.rows[r]);
    side.lines.push_back(table.lines[r]);
  }
  if (genuine.rows.empty()) throw MissingClass("no class-0 (genuine) rows");
  if (fraud.rows.empty()) throw MissingClass("no class-1 (fraud) rows");
  Pipeline pipeline = Pipeline::fit(genuine, schema);
  Eigen::MatrixXd train = pipeline.transform(genuine);
  Eigen::MatrixXd test = pipeline.transform(fraud);
  return {std::move(train), std::move(test), std::move(pipeline)};
}

OneClassSplit split_one_class(const TabularDataset& dataset) {
  return split_one_class(to_raw_table(dataset), numeric_schema(dataset));
}

TabularDataset synth_occ(std::uint64_t seed, std::size_t n_neg, std::size_t n_pos,
                         std::size_t features, double shift) {
  if (n_neg < 1 || n_pos < 1 || features < 1) {
    throw ConfigError("synth_occ needs n_neg, n_pos and features >= 1");
  }
  if (!(shift >= 0.0)) throw ConfigError("synth_occ shift must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  TabularDataset dataset;
  const auto rows = static_cast<Eigen::Index>(n_neg + n_pos);
  dataset.rows.resize(rows, static_cast<Eigen::Index>(features));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const bool positive = r >= static_cast<Eigen::Index>(n_neg);
    const double centre = positive ? 0.3 + shift : 0.3;
    for (Eigen::Index c = 0; c < dataset.rows.cols(); ++c) {
      dataset.rows(r, c) = std::clamp(centre + noise(rng), 0.0, 1.0);
    }
    dataset.labels.push_back(positive ? 1 : 0);
  }
  for (std::size_t f = 0; f < features; ++f) {
    dataset.specs.push_back({"f" + std::to_string(f), FeatureKind::kNumerical, {}, 0.0, 1.0});
  }
  dataset.provenance = "synth_occ(seed=" + std::to_string(seed) + ",n_neg=" +
                       std::to_string(n_neg) + ",n_pos=" + std::to_string(n_pos) +
                       ",nf=" + std::to_string(features) + ",shift=" + format_double(shift) + ")";
  return dataset;
}

RawTable to_raw_table(const TabularDataset& dataset) {
  RawTable table;
  for (const auto& spec : dataset.specs) table.header.push_back(spec.name);
  table.header.emplace_back("label");
  for (Eigen::Index r = 0; r < dataset.rows.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < dataset.rows.cols(); ++c) {
      row.push_back(format_double(dataset.rows(r, c)));
    }
    row.push_back(std::to_string(dataset.labels[static_cast<std::size_t>(r)]));
    table.rows.push_back(std::move(row));
    table.lines.push_back(static_cast<std::size_t>(r) + 2);
  }
  return table;
}

Schema numeric_schema(const TabularDataset& dataset) {
  Schema schema;
  schema.label = "label";
  for (const auto& spec : dataset.specs) {
    schema.columns.push_back({spec.name, FeatureKind::kNumerical, {}, 0.0, 0.0});
  }
  return schema;
}

std::string schema_text(const Schema& schema) {
  std::ostringstream out;
  out << "label " << quote(schema.label) << " positive=" << schema.positive
      << " negative=" << schema.negative << '\n';
  for (const auto& spec : schema.columns) {
    out << to_string(spec.kind) << ' ' << quote(spec.name);
    if (spec.kind == FeatureKind::kOrdinal) {
      for (const auto& level : spec.categories) out << ' ' << quote(level);
    }
    out << '\n';
  }
  return out.str();
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& matrix, const Pipeline& pipeline) {
  out << "cvae-matrix " << kMatrixFormatVersion << '\n';
  out << "pipeline " << pipeline.id() << '\n';
  out << "shape " << matrix.rows() << ' ' << matrix.cols() << '\n';
  out << "columns";
  for (const auto& name : pipeline.encoded_columns()) out << ' ' << quote(name);
  out << '\n';
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(matrix(r, c));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& expected_pipeline_id,
                            std::string* pipeline_id) {
  std::string line;
  std::size_t line_number = 0;
  auto next_tokens = [&]() {
    if (!std::getline(in, line)) throw ParseError(line_number + 1, "matrix file truncated");
    ++line_number;
    return tokenize(line, line_number);
  };
  auto magic = next_tokens();
  if (magic.size() != 2 || magic[0] != "cvae-matrix" ||
      parse_integer(magic[1]) != kMatrixFormatVersion) {
    throw ParseError(line_number, "not a cvae-matrix v1 file");
  }
  auto id = next_tokens();
  if (id.size() != 2 || id[0] != "pipeline") throw ParseError(line_number, "missing pipeline id");
  if (!expected_pipeline_id.empty() && id[1] != expected_pipeline_id) {
    throw InputError("matrix was produced by pipeline " + id[1] + ", expected " +
                     expected_pipeline_id);
  }
  if (pipeline_id != nullptr) *pipeline_id = id[1];
  auto shape = next_tokens();
  if (shape.size() != 3 || shape[0] != "shape") throw ParseError(line_number, "missing shape");
  const auto rows = static_cast<Eigen::Index>(parse_integer(shape[1]));
  const auto cols = static_cast<Eigen::Index>(parse_integer(shape[2]));
  auto columns = next_tokens();
  if (columns.empty() || columns[0] != "columns" ||
      static_cast<Eigen::Index>(columns.size()) != cols + 1) {
    throw ParseError(line_number, "column list does not match shape");
  }
  Eigen::MatrixXd matrix(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw ParseError(line_number + 1, "matrix file truncated");
    ++line_number;
    const auto fields = split(line, ',');
    if (static_cast<Eigen::Index>(fields.size()) != cols) {
      throw ParseError(line_number, "row has " + std::to_string(fields.size()) + " values");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      matrix(r, c) = parse_double(fields[static_cast<std::size_t>(c)]);
    }
  }
  return matrix;
}

}  // namespace cvae::data
