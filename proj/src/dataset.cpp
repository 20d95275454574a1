#include "binmask/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binmask/error.hpp"

namespace binmask {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

template <typename T>
void write_le(std::ostream& os, T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T read_le(std::istream& is) {
  std::array<char, sizeof(T)> bytes{};
  if (!is.read(bytes.data(), sizeof(T))) throw InputError("binary dataset: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

constexpr char kMagic[8] = {'B', 'M', 'D', 'S', 'E', 'T', '0', '1'};

}  // namespace

Dataset subset_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.feature_names = data.feature_names;
  out.informative = data.informative;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.rows()) throw InputError("subset_rows: row index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) =
        data.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = data.labels[rows[i]];
  }
  return out;
}

Dataset select_columns(const Dataset& data, std::span<const std::size_t> columns) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.labels = data.labels;
  out.features.resize(data.features.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] >= data.dims()) throw InputError("select_columns: column index out of range");
    out.features.col(static_cast<Eigen::Index>(j)) =
        data.features.col(static_cast<Eigen::Index>(columns[j]));
    if (!data.feature_names.empty()) out.feature_names.push_back(data.feature_names[columns[j]]);
    if (std::find(data.informative.begin(), data.informative.end(), columns[j]) !=
        data.informative.end()) {
      out.informative.push_back(j);
    }
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path, int label_column, bool header) {
  std::ifstream in(path);
  if (!in) throw InputError("load_csv: cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::string> names;
  std::size_t width = 0;
  std::size_t label_at = 0;
  std::string line;
  std::size_t line_no = 0;
  auto resolve_label = [&](std::size_t cols) {
    const long idx = label_column < 0 ? static_cast<long>(cols) + label_column : label_column;
    if (idx < 0 || idx >= static_cast<long>(cols)) {
      throw InputError("load_csv: label column " + std::to_string(label_column) +
                       " outside a row of " + std::to_string(cols) + " fields");
    }
    return static_cast<std::size_t>(idx);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (width == 0) {
      width = fields.size();
      if (width < 2) throw InputError("load_csv: row " + std::to_string(line_no) +
                                      " needs a label and at least one feature");
      label_at = resolve_label(width);
      if (header) {
        for (std::size_t j = 0; j < fields.size(); ++j) {
          if (j != label_at) names.push_back(fields[j]);
        }
        continue;
      }
    }
    if (fields.size() != width) {
      throw InputError("load_csv: row " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(width));
    }
    std::vector<double> values;
    values.reserve(width - 1);
    for (std::size_t j = 0; j < width; ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v)) {
        throw InputError("load_csv: row " + std::to_string(line_no) + " column " +
                         std::to_string(j) + ": '" + fields[j] + "' is not numeric");
      }
      if (j == label_at) {
        if (v < 0 || v != std::floor(v) || v > 1e9) {
          throw InputError("load_csv: row " + std::to_string(line_no) + ": label '" + fields[j] +
                           "' is not a non-negative integer");
        }
        labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw InputError("load_csv: '" + path.string() + "' has no data rows");
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j + 1 < width; ++j) {
      out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
    }
  }
  out.labels = std::move(labels);
  out.num_classes = std::max(2, *std::max_element(out.labels.begin(), out.labels.end()) + 1);
  out.feature_names = std::move(names);
  return out;
}

Splits split_dataset(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0) ||
      !(spec.validation_fraction >= 0.0 && spec.validation_fraction < 1.0) ||
      spec.test_fraction + spec.validation_fraction >= 1.0) {
    throw ConfigError("split: fractions must lie in [0, 1) and sum to less than 1");
  }
  const std::size_t n = data.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * n));
  if (n_test + n_val >= n) throw InputError("split: no rows left for training");
  Splits s;
  s.test_rows.assign(order.begin(), order.begin() + n_test);
  s.validation_rows.assign(order.begin() + n_test, order.begin() + n_test + n_val);
  s.train_rows.assign(order.begin() + n_test + n_val, order.end());
  s.train = subset_rows(data, s.train_rows);
  s.validation = subset_rows(data, s.validation_rows);
  s.test = subset_rows(data, s.test_rows);
  return s;
}

void normalize(Dataset& train, std::span<Dataset* const> others) {
  if (train.rows() == 0) throw InputError("normalize: empty training set");
  const RowVector lo = train.features.colwise().minCoeff();
  const RowVector hi = train.features.colwise().maxCoeff();
  const RowVector range = hi - lo;
  auto apply = [&](Matrix& x, bool clip) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (range(j) > 0.0) {
        x.col(j) = (x.col(j).array() - lo(j)) / range(j);
        if (clip) x.col(j) = x.col(j).cwiseMax(0.0).cwiseMin(1.0);
      } else {
        x.col(j).setZero();
      }
    }
  };
  for (Dataset* other : others) {
    if (other->dims() != train.dims()) throw InputError("normalize: column count mismatch");
    apply(other->features, true);
  }
  apply(train.features, false);
}

Dataset duplicate_to_min_batches(const Dataset& data, std::size_t batch_size,
                                 std::size_t min_batches) {
  if (data.rows() == 0) throw InputError("duplicate_to_min_batches: empty dataset");
  if (batch_size == 0) throw InputError("duplicate_to_min_batches: batch size must be >= 1");
  const std::size_t n = data.rows();
  if (n / batch_size >= min_batches) return data;
  const std::size_t factor = (min_batches * batch_size + n - 1) / n;
  Dataset out;
  out.num_classes = data.num_classes;
  out.feature_names = data.feature_names;
  out.informative = data.informative;
  out.features.resize(static_cast<Eigen::Index>(n * factor), data.features.cols());
  out.labels.reserve(n * factor);
  for (std::size_t f = 0; f < factor; ++f) {
    out.features.middleRows(static_cast<Eigen::Index>(f * n), static_cast<Eigen::Index>(n)) =
        data.features;
    out.labels.insert(out.labels.end(), data.labels.begin(), data.labels.end());
  }
  return out;
}

void save_binary(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("save_binary: cannot open '" + path.string() + "'");
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint64_t>(os, data.rows());
  write_le<std::uint64_t>(os, data.dims());
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(data.num_classes));
  for (Eigen::Index k = 0; k < data.features.size(); ++k) write_le<double>(os, data.features.data()[k]);
  for (int y : data.labels) write_le<std::int32_t>(os, y);
  if (!os) throw InputError("save_binary: write failed for '" + path.string() + "'");
}

Dataset load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("load_binary: cannot open '" + path.string() + "'");
  char magic[8] = {};
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError("load_binary: '" + path.string() + "' is not a dataset sidecar");
  }
  const auto rows = read_le<std::uint64_t>(is);
  const auto cols = read_le<std::uint64_t>(is);
  const auto classes = read_le<std::uint64_t>(is);
  Dataset out;
  out.num_classes = static_cast<int>(classes);
  out.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index k = 0; k < out.features.size(); ++k) out.features.data()[k] = read_le<double>(is);
  out.labels.resize(rows);
  for (auto& y : out.labels) y = read_le<std::int32_t>(is);
  return out;
}

}  // namespace binmask
