#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvae/errors.hpp"

// Tabular ingestion: CSV parsing, declarative schemas, a fitted
// normalization pipeline and the one-class train/test split.
namespace cvae::data {

enum class FeatureKind { kNumerical, kCategorical, kOrdinal, kDrop };

std::string to_string(FeatureKind kind);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kNumerical;
  // Categorical: fitted vocabulary (first-appearance order). Ordinal: declared level order.
  std::vector<std::string> categories;
  double min = 0.0;  // numerical only, fitted on class-0 rows
  double max = 0.0;

  bool operator==(const FeatureSpec&) const = default;
};

// Column roles as declared in a schema file:
//
//   # comment
//   label <column> [positive=<value>] [negative=<value>]
//   numerical <column>
//   categorical <column>
//   ordinal <column> <level> <level> ...   (lowest level first)
//   drop <column>
//
// Tokens containing spaces are double-quoted; \" and \\ escape inside quotes.
struct Schema {
  std::string label;
  std::string positive = "1";
  std::string negative = "0";
  std::vector<FeatureSpec> columns;  // everything except the label

  const FeatureSpec* find(const std::string& name) const;
};

Schema parse_schema(std::istream& in);
Schema read_schema(const std::string& path);

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  std::size_t column_index(const std::string& name) const;  // throws UnknownColumn
  bool has_column(const std::string& name) const;
};

// RFC 4180 style: header row, optional double-quoted fields with "" escapes.
RawTable parse_csv(std::istream& in, char delimiter = ',');
RawTable read_csv(const std::string& path, char delimiter = ',');
void write_csv(std::ostream& out, const RawTable& table);

// 0 = genuine, 1 = fraud. Throws ParseError on any other label value.
std::vector<int> extract_labels(const RawTable& table, const Schema& schema);

// Min-max / one-hot / ordinal encoding fitted on class-0 rows only.
class Pipeline {
 public:
  static Pipeline fit(const RawTable& table, const Schema& schema);

  // Encodes every row; the label column and dropped columns are excluded.
  Eigen::MatrixXd transform(const RawTable& table) const;

  std::vector<std::string> encoded_columns() const;
  Eigen::Index width() const;
  const std::vector<FeatureSpec>& specs() const { return specs_; }
  const Schema& schema() const { return schema_; }

  std::string serialize() const;
  static Pipeline deserialize(std::istream& in);
  // Hash of the serialized form; ties persisted matrices to their pipeline.
  std::string id() const;

  bool operator==(const Pipeline& other) const { return serialize() == other.serialize(); }

 private:
  Schema schema_;
  std::vector<FeatureSpec> specs_;
};

struct TabularDataset {
  Eigen::MatrixXd rows;
  std::vector<int> labels;
  std::vector<FeatureSpec> specs;
  std::string provenance;
};

struct OneClassSplit {
  Eigen::MatrixXd train;  // class 0, normalized
  Eigen::MatrixXd test;   // class 1, normalized
  Pipeline pipeline;
};

// Exact partition by label with the pipeline fitted on class 0.
// Throws MissingClass when either class is absent.
OneClassSplit split_one_class(const RawTable& table, const Schema& schema);
OneClassSplit split_one_class(const TabularDataset& dataset);

// Negatives ~ N(0.3, 0.05^2) per feature, positives ~ N(0.3 + shift, 0.05^2),
// clipped to [0, 1]. Negatives come first.
TabularDataset synth_occ(std::uint64_t seed, std::size_t n_neg, std::size_t n_pos,
                         std::size_t features, double shift);

// CSV view of a numeric dataset (features f0..f{n-1} plus a `label` column)
// and the matching schema.
RawTable to_raw_table(const TabularDataset& dataset);
Schema numeric_schema(const TabularDataset& dataset);
std::string schema_text(const Schema& schema);

// Normalized matrix container:
//   cvae-matrix 1
//   pipeline <id>
//   shape <rows> <cols>
//   columns <quoted names>
//   one comma-separated row per line
void write_matrix(std::ostream& out, const Eigen::MatrixXd& matrix, const Pipeline& pipeline);
// Throws InputError if `expected_pipeline_id` is non-empty and differs.
Eigen::MatrixXd read_matrix(std::istream& in, const std::string& expected_pipeline_id = {},
                            std::string* pipeline_id = nullptr);

}  // namespace cvae::data
