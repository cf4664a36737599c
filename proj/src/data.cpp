#include "fedsim/data.hpp"

#include <glob.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fedsim/error.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {
namespace {

// Column names of the 23 MHEALTH sensor channels.
const std::vector<std::string> kMhealthColumns = {
    "chest_acc_x",     "chest_acc_y",     "chest_acc_z",
    "ecg_lead_1",      "ecg_lead_2",      "ankle_acc_x",
    "ankle_acc_y",     "ankle_acc_z",     "ankle_gyro_x",
    "ankle_gyro_y",    "ankle_gyro_z",    "ankle_mag_x",
    "ankle_mag_y",     "ankle_mag_z",     "arm_acc_x",
    "arm_acc_y",       "arm_acc_z",       "arm_gyro_x",
    "arm_gyro_y",      "arm_gyro_z",      "arm_mag_x",
    "arm_mag_y",       "arm_mag_z"};

struct RawRow {
  std::vector<double> features;
  int64_t label;
};

std::string where(const std::string& path, size_t line) {
  return path + ":" + std::to_string(line);
}

template <typename T>
bool parse_number(std::string_view token, T& value) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    const size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

}  // namespace

void Dataset::validate() const {
  if (y.size() != x.rows()) {
    throw Error(ErrorKind::kShape, "dataset has " + std::to_string(x.rows()) +
                                       " rows but " + std::to_string(y.size()) +
                                       " labels");
  }
  for (size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= class_count) {
      throw Error(ErrorKind::kInvalidLabel,
                  "row " + std::to_string(i) + " label " +
                      std::to_string(y[i]) + " outside [0, " +
                      std::to_string(class_count) + ")");
    }
  }
  for (double v : x.values()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kFormat, "dataset contains a non-finite feature");
    }
  }
}

Dataset Dataset::subset(const std::vector<size_t>& indices) const {
  Dataset out;
  out.x = Matrix(indices.size(), features());
  out.y.reserve(indices.size());
  out.class_count = class_count;
  out.feature_names = feature_names;
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto src = x.row(indices[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.y.push_back(y[indices[i]]);
  }
  return out;
}

Dataset load_mhealth(const std::vector<std::string>& paths,
                     const MhealthOptions& options, IngestReport* report) {
  if (paths.empty()) throw Error(ErrorKind::kIo, "no input files");

  std::vector<RawRow> rows;
  size_t width = 0;
  std::string width_origin;
  size_t rows_read = 0;
  size_t null_rows = 0;

  for (const std::string& path : paths) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto fields = split_fields(line);
      if (fields.empty()) continue;
      if (fields.size() < 2) {
        throw Error(ErrorKind::kFormat,
                    where(path, line_no) + ": need features and a label");
      }
      if (width == 0) {
        width = fields.size();
        width_origin = where(path, line_no);
      } else if (fields.size() != width) {
        throw Error(ErrorKind::kFormat,
                    where(path, line_no) + ": " +
                        std::to_string(fields.size()) + " columns, expected " +
                        std::to_string(width) + " as at " + width_origin);
      }
      RawRow row;
      row.features.resize(width - 1);
      for (size_t c = 0; c + 1 < width; ++c) {
        if (!parse_number(fields[c], row.features[c]) ||
            !std::isfinite(row.features[c])) {
          throw Error(ErrorKind::kParse,
                      where(path, line_no) + ": column " +
                          std::to_string(c + 1) + " is not a finite number: '" +
                          std::string(fields[c]) + "'");
        }
      }
      if (!parse_number(fields.back(), row.label)) {
        throw Error(ErrorKind::kParse, where(path, line_no) +
                                           ": label is not an integer: '" +
                                           std::string(fields.back()) + "'");
      }
      ++rows_read;
      if (row.label == 0 && !options.keep_null_class) {
        ++null_rows;
        continue;
      }
      rows.push_back(std::move(row));
    }
    if (in.bad()) throw Error(ErrorKind::kIo, "read failure on " + path);
  }
  if (rows.empty()) {
    throw Error(ErrorKind::kEmptyDataset,
                "no labelled activity rows in " + std::to_string(paths.size()) +
                    " file(s)");
  }

  // Activity labels map to [0, C) in ascending order; a retained null class
  // goes last.
  std::vector<int64_t> labels;
  for (const RawRow& row : rows) labels.push_back(row.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  if (options.keep_null_class && !labels.empty() && labels.front() == 0) {
    labels.erase(labels.begin());
    labels.push_back(0);
  }
  std::map<int64_t, Label> class_of;
  for (size_t i = 0; i < labels.size(); ++i) {
    class_of[labels[i]] = static_cast<Label>(i);
  }

  Dataset data;
  data.x = Matrix(rows.size(), width - 1);
  data.y.reserve(rows.size());
  data.class_count = labels.size();
  for (size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].features.begin(), rows[r].features.end(),
              data.x.row(r).begin());
    data.y.push_back(class_of.at(rows[r].label));
  }
  if (width - 1 == kMhealthColumns.size()) data.feature_names = kMhealthColumns;
  data.validate();

  if (report) {
    report->files = paths.size();
    report->rows_read = rows_read;
    report->null_rows_dropped = null_rows;
    report->source_labels = labels;
  }
  return data;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t result{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &result);
  std::vector<std::string> paths;
  if (rc == 0) {
    for (size_t i = 0; i < result.gl_pathc; ++i) {
      paths.emplace_back(result.gl_pathv[i]);
    }
  }
  ::globfree(&result);
  if (paths.empty()) {
    throw Error(ErrorKind::kIo, "no files match '" + pattern + "'");
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

void save_mhealth_format(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  char buf[32];
  for (size_t r = 0; r < data.rows(); ++r) {
    for (double v : data.x.row(r)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << '\t';
    }
    out << (data.y[r] + 1) << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failure on " + path);
}

StandardizationParams standardize_fit(const Dataset& train) {
  if (train.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "cannot standardize an empty dataset");
  }
  const size_t n = train.features();
  const double m = static_cast<double>(train.rows());
  StandardizationParams params{std::vector<double>(n, 0.0),
                               std::vector<double>(n, 0.0)};
  for (size_t r = 0; r < train.rows(); ++r) {
    const auto row = train.x.row(r);
    for (size_t c = 0; c < n; ++c) params.mean[c] += row[c];
  }
  for (double& mu : params.mean) mu /= m;
  for (size_t r = 0; r < train.rows(); ++r) {
    const auto row = train.x.row(r);
    for (size_t c = 0; c < n; ++c) {
      const double d = row[c] - params.mean[c];
      params.std[c] += d * d;
    }
  }
  for (double& s : params.std) s = std::max(std::sqrt(s / m), kStdFloor);
  return params;
}

Dataset standardize_apply(const StandardizationParams& params, Dataset data) {
  if (params.mean.size() != data.features() ||
      params.std.size() != data.features()) {
    throw Error(ErrorKind::kShape, "standardization width mismatch");
  }
  for (size_t r = 0; r < data.rows(); ++r) {
    auto row = data.x.row(r);
    for (size_t c = 0; c < row.size(); ++c) {
      row[c] = (row[c] - params.mean[c]) / params.std[c];
    }
  }
  return data;
}

TrainTestSplit split_train_test(const Dataset& data, double test_fraction,
                                uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidInput, "test fraction must be in (0, 1)");
  }
  std::vector<std::vector<size_t>> by_class(data.class_count);
  for (size_t i = 0; i < data.rows(); ++i) by_class[data.y[i]].push_back(i);

  Rng rng(seed);
  std::vector<size_t> train_rows, test_rows;
  for (size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 2) {
      throw Error(ErrorKind::kStratification,
                  "class " + std::to_string(c) + " has a single row");
    }
    rng.shuffle(std::span<size_t>(rows));
    const auto wanted = static_cast<size_t>(
        std::llround(test_fraction * static_cast<double>(rows.size())));
    const size_t n_test = std::clamp<size_t>(wanted, 1, rows.size() - 1);
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + n_test);
    train_rows.insert(train_rows.end(), rows.begin() + n_test, rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

std::vector<ClientDataset> partition_clients(const Dataset& train,
                                             size_t clients, uint64_t seed) {
  if (clients < 1) throw Error(ErrorKind::kInvalidInput, "need >= 1 client");
  if (clients > train.rows()) {
    throw Error(ErrorKind::kTooManyClients,
                std::to_string(clients) + " clients for " +
                    std::to_string(train.rows()) + " rows");
  }
  std::vector<size_t> order(train.rows());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<size_t>(order));

  const size_t base = train.rows() / clients;
  const size_t extra = train.rows() % clients;
  std::vector<ClientDataset> parts;
  parts.reserve(clients);
  size_t pos = 0;
  for (size_t c = 0; c < clients; ++c) {
    const size_t count = base + (c < extra ? 1 : 0);
    std::vector<size_t> rows(order.begin() + pos, order.begin() + pos + count);
    pos += count;
    // A client keeps its records in their original order.
    std::sort(rows.begin(), rows.end());
    parts.push_back({c, train.subset(rows)});
  }
  return parts;
}

std::vector<std::vector<double>> synthetic_centers(size_t features,
                                                   size_t classes,
                                                   double separation,
                                                   uint64_t seed) {
  if (features == 0 || classes < 2 || !(separation > 0.0)) {
    throw Error(ErrorKind::kInvalidInput,
                "synthetic data needs features >= 1, classes >= 2, "
                "separation > 0");
  }
  std::vector<std::vector<double>> centers(classes,
                                           std::vector<double>(features, 0.0));
  if (features >= classes) {
    // Scaled unit vectors are exactly `separation` apart; the scale is
    // nudged up so rounding never puts a pair below it.
    const double scale = separation * std::sqrt(0.5) * (1.0 + 1e-12);
    for (size_t c = 0; c < classes; ++c) centers[c][c] = scale;
    return centers;
  }

  // Too few dimensions for orthogonal centers: rejection-sample in a cube
  // that widens whenever placement keeps failing.
  Rng rng(derive_seed({seed, 0x63656e74ULL}));
  double half_width =
      separation * std::pow(static_cast<double>(classes), 1.0 / features);
  size_t placed = 0;
  size_t failures = 0;
  while (placed < classes) {
    for (double& v : centers[placed]) v = rng.uniform(-half_width, half_width);
    bool ok = true;
    for (size_t j = 0; j < placed && ok; ++j) {
      double d2 = 0.0;
      for (size_t k = 0; k < features; ++k) {
        const double d = centers[placed][k] - centers[j][k];
        d2 += d * d;
      }
      ok = d2 >= separation * separation;
    }
    if (ok) {
      ++placed;
      failures = 0;
    } else if (++failures == 1000) {
      half_width *= 1.1;
      failures = 0;
    }
  }
  return centers;
}

Dataset make_synthetic(size_t rows, size_t features, size_t classes,
                       double separation, uint64_t seed) {
  if (rows == 0) throw Error(ErrorKind::kInvalidInput, "rows must be >= 1");
  const auto centers = synthetic_centers(features, classes, separation, seed);
  Rng rng(derive_seed({seed, 0x6e6f697365ULL}));
  Dataset data;
  data.x = Matrix(rows, features);
  data.y.resize(rows);
  data.class_count = classes;
  for (size_t r = 0; r < rows; ++r) {
    const size_t c = r % classes;
    data.y[r] = static_cast<Label>(c);
    auto row = data.x.row(r);
    for (size_t k = 0; k < features; ++k) row[k] = centers[c][k] + rng.normal();
  }
  return data;
}

}  // namespace fedsim
