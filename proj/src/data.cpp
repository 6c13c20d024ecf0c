#include "dhag/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dhag {

using nlohmann::json;

std::size_t Dataset::count_anomalies() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
    const std::size_t d = dim();
    std::vector<double> data;
    data.reserve(idx.size() * d);
    std::vector<int> sub_labels;
    sub_labels.reserve(idx.size());
    const double* p = features.data().data();
    for (std::size_t i : idx) {
        if (i >= size()) throw DimensionError("Dataset::subset: index out of range");
        data.insert(data.end(), p + i * d, p + (i + 1) * d);
        sub_labels.push_back(labels[i]);
    }
    Dataset out;
    if (!idx.empty()) {
        out.features = Tensor::from_data({idx.size(), d}, std::move(data));
    }
    out.labels = std::move(sub_labels);
    out.feature_names = feature_names;
    return out;
}

// --- CSV ----------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '\n'))
        --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == delim) cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw IoError("CSV parse error at row " + std::to_string(row) + ", column " +
                      std::to_string(col) + ": cannot parse '" + cell + "' as a number");
    }
    return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options, CsvSchema* schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw IoError("CSV file has no header row: " + path.string());
    const std::vector<std::string> header = split_line(line, options.delimiter);

    std::ptrdiff_t label_col = -1;
    std::vector<bool> is_categorical(header.size(), false);
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == options.label_column) label_col = static_cast<std::ptrdiff_t>(c);
        for (const auto& cat : options.categorical_columns) {
            if (header[c] == cat) is_categorical[c] = true;
        }
    }
    if (!options.label_column.empty() && label_col < 0) {
        throw ConfigError("label column '" + options.label_column + "' not found in " +
                          path.string());
    }

    // First pass: raw cells.
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line, options.delimiter);
        if (cells.size() != header.size()) {
            throw IoError("CSV row " + std::to_string(line_no) + " has " +
                          std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(header.size()));
        }
        rows.push_back(std::move(cells));
    }

    // Fit categorical vocabularies when the schema is empty.
    CsvSchema local_schema;
    CsvSchema* active = schema ? schema : &local_schema;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!is_categorical[c] || active->categories.count(header[c])) continue;
        std::set<std::string> values;
        for (const auto& row : rows) values.insert(row[c]);
        active->categories[header[c]] =
            std::vector<std::string>(values.begin(), values.end());  // sorted
    }

    // Layout: numeric columns in file order, then one-hot blocks.
    std::vector<std::string> names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<std::ptrdiff_t>(c) == label_col || is_categorical[c]) continue;
        names.push_back(header[c]);
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<std::ptrdiff_t>(c) == label_col || !is_categorical[c]) continue;
        for (const auto& v : active->categories.at(header[c])) names.push_back(header[c] + "=" + v);
    }

    const std::size_t d = names.size();
    std::vector<double> data;
    data.reserve(rows.size() * d);
    std::vector<int> labels;
    labels.reserve(rows.size());
    bool warned_unknown = false;

    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_col || is_categorical[c]) continue;
            data.push_back(parse_cell(row[c], r + 2, c + 1));
        }
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_col || !is_categorical[c]) continue;
            const auto& vocab = active->categories.at(header[c]);
            auto it = std::lower_bound(vocab.begin(), vocab.end(), row[c]);
            const bool known = it != vocab.end() && *it == row[c];
            if (!known && !warned_unknown) {
                log_warn("unknown category '" + row[c] + "' in column '" + header[c] +
                         "', encoding as all-zeros");
                warned_unknown = true;
            }
            for (std::size_t v = 0; v < vocab.size(); ++v) {
                data.push_back(known && vocab[v] == row[c] ? 1.0 : 0.0);
            }
        }
        if (label_col >= 0) {
            const std::string& cell = row[static_cast<std::size_t>(label_col)];
            int y;
            if (!options.anomaly_values.empty()) {
                y = std::find(options.anomaly_values.begin(), options.anomaly_values.end(),
                              cell) != options.anomaly_values.end()
                        ? 1
                        : 0;
            } else if (cell == "0") {
                y = 0;
            } else if (cell == "1") {
                y = 1;
            } else {
                throw IoError("CSV row " + std::to_string(r + 2) +
                              ": label '" + cell + "' is not 0/1 and no anomaly_values given");
            }
            labels.push_back(y);
        } else {
            labels.push_back(0);
        }
    }

    Dataset out;
    if (!rows.empty()) out.features = Tensor::from_data({rows.size(), d}, std::move(data));
    out.labels = std::move(labels);
    out.feature_names = std::move(names);
    return out;
}

// --- normalization -------------------------------------------------------------

NormMode norm_mode_from_string(const std::string& s) {
    if (s == "zscore") return NormMode::zscore;
    if (s == "minmax") return NormMode::minmax;
    throw ConfigError("normalization mode must be 'zscore' or 'minmax', got '" + s + "'");
}

std::string to_string(NormMode mode) { return mode == NormMode::zscore ? "zscore" : "minmax"; }

std::vector<double> NormStats::apply_row(std::span<const double> row) const {
    if (row.size() != shift.size()) throw DimensionError("NormStats: row width mismatch");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - shift[j]) / scale[j];
    return out;
}

NormStats fit_normalizer(const Dataset& train, NormMode mode) {
    if (train.size() == 0) throw ConfigError("fit_normalizer: empty training set");
    const std::size_t n = train.size(), d = train.dim();
    const double* p = train.features.data().data();
    NormStats stats;
    stats.mode = mode;
    stats.shift.assign(d, 0.0);
    stats.scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        if (mode == NormMode::zscore) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += p[i * d + j];
            const double mean = sum / static_cast<double>(n);
            double sq = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = p[i * d + j] - mean;
                sq += c * c;
            }
            const double var = sq / static_cast<double>(n);  // population variance
            stats.shift[j] = mean;
            stats.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        } else {
            double lo = p[j], hi = p[j];
            for (std::size_t i = 1; i < n; ++i) {
                lo = std::min(lo, p[i * d + j]);
                hi = std::max(hi, p[i * d + j]);
            }
            stats.shift[j] = lo;
            stats.scale[j] = hi > lo ? hi - lo : 1.0;
        }
    }
    return stats;
}

Dataset apply_normalizer(const NormStats& stats, const Dataset& ds) {
    Dataset out = ds;
    if (ds.size() == 0) return out;
    const std::size_t n = ds.size(), d = ds.dim();
    if (stats.shift.size() != d) throw DimensionError("apply_normalizer: width mismatch");
    std::vector<double> data(n * d);
    const double* p = ds.features.data().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            data[i * d + j] = (p[i * d + j] - stats.shift[j]) / stats.scale[j];
    out.features = Tensor::from_data({n, d}, std::move(data));
    return out;
}

NormStats normalize(Dataset& train, const std::vector<Dataset*>& others, NormMode mode) {
    NormStats stats = fit_normalizer(train, mode);
    train = apply_normalizer(stats, train);
    for (Dataset* ds : others) {
        if (ds != nullptr && ds->size() > 0) *ds = apply_normalizer(stats, *ds);
    }
    return stats;
}

// --- splitting -------------------------------------------------------------------

SplitProtocol split_protocol_from_string(const std::string& s) {
    if (s == "goad_style") return SplitProtocol::goad_style;
    if (s == "semisup_60_40") return SplitProtocol::semisup_60_40;
    if (s == "fraction") return SplitProtocol::fraction;
    throw ConfigError("split protocol must be goad_style, semisup_60_40, or fraction; got '" + s +
                      "'");
}

std::string to_string(SplitProtocol p) {
    switch (p) {
        case SplitProtocol::goad_style: return "goad_style";
        case SplitProtocol::semisup_60_40: return "semisup_60_40";
        case SplitProtocol::fraction: return "fraction";
    }
    return "?";
}

void SplitSpec::validate() const {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw ConfigError("split.train_fraction must lie in (0, 1)");
    }
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("split.gamma must lie in [0, 1)");
}

SplitResult split(const Dataset& dataset, const SplitSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<std::size_t> normals, anomalies;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (dataset.labels[i] == 0 ? normals : anomalies).push_back(i);
    }

    SplitResult result;
    if (spec.protocol == SplitProtocol::goad_style || spec.protocol == SplitProtocol::fraction) {
        const double fraction =
            spec.protocol == SplitProtocol::goad_style ? 0.5 : spec.train_fraction;
        rng.shuffle(normals);
        const std::size_t n_train =
            static_cast<std::size_t>(fraction * static_cast<double>(normals.size()));
        result.train_idx.assign(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(n_train));
        result.test_idx.assign(normals.begin() + static_cast<std::ptrdiff_t>(n_train), normals.end());
        result.test_idx.insert(result.test_idx.end(), anomalies.begin(), anomalies.end());
        if (spec.gamma > 0.0) {
            throw ConfigError(
                "gamma > 0 requires training-side anomalies; use the semisup_60_40 protocol");
        }
    } else {
        rng.shuffle(normals);
        rng.shuffle(anomalies);
        const std::size_t train_norm =
            static_cast<std::size_t>(0.6 * static_cast<double>(normals.size()));
        const std::size_t train_anom =
            static_cast<std::size_t>(0.6 * static_cast<double>(anomalies.size()));

        std::vector<std::size_t> train_side(normals.begin(),
                                            normals.begin() + static_cast<std::ptrdiff_t>(train_norm));
        std::vector<std::size_t> train_side_anoms(
            anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(train_anom));
        result.test_idx.assign(normals.begin() + static_cast<std::ptrdiff_t>(train_norm),
                               normals.end());
        result.test_idx.insert(result.test_idx.end(),
                               anomalies.begin() + static_cast<std::ptrdiff_t>(train_anom),
                               anomalies.end());

        std::size_t n_labeled = 0;
        if (spec.gamma > 0.0) {
            if (train_side_anoms.empty()) {
                throw ConfigError("gamma > 0 but no anomalies available on the training side");
            }
            const std::size_t total_train = train_side.size() + train_side_anoms.size();
            n_labeled = static_cast<std::size_t>(
                std::llround(spec.gamma * static_cast<double>(total_train)));
            n_labeled = std::max<std::size_t>(n_labeled, 1);
            n_labeled = std::min(n_labeled, train_side_anoms.size());
        }
        result.labeled_idx.assign(train_side_anoms.begin(),
                                  train_side_anoms.begin() + static_cast<std::ptrdiff_t>(n_labeled));
        // Remaining training-side anomalies stay in the pool as unlabeled
        // contamination (the 60/40 protocol trains on data believed normal).
        result.train_idx = std::move(train_side);
        result.train_idx.insert(result.train_idx.end(),
                                train_side_anoms.begin() + static_cast<std::ptrdiff_t>(n_labeled),
                                train_side_anoms.end());
    }

    std::sort(result.train_idx.begin(), result.train_idx.end());
    std::sort(result.labeled_idx.begin(), result.labeled_idx.end());
    std::sort(result.test_idx.begin(), result.test_idx.end());
    result.train = dataset.subset(result.train_idx);
    result.labeled_anomalies = dataset.subset(result.labeled_idx);
    result.test = dataset.subset(result.test_idx);
    return result;
}

// --- synthetic -------------------------------------------------------------------

Dataset synthetic_two_gaussian(std::size_t n_normal, std::size_t n_anomaly, std::size_t d,
                               double separation, Rng& rng) {
    if (separation <= 0.0) throw ConfigError("synthetic_two_gaussian: separation must be > 0");
    if (d == 0) throw ConfigError("synthetic_two_gaussian: dimension must be positive");

    std::vector<double> direction(d);
    double norm = 0.0;
    while (norm <= 0.0) {
        for (double& v : direction) v = rng.normal();
        norm = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
    }
    for (double& v : direction) v /= norm;

    const std::size_t n = n_normal + n_anomaly;
    std::vector<double> data;
    data.reserve(n * d);
    for (std::size_t i = 0; i < n_normal; ++i)
        for (std::size_t j = 0; j < d; ++j) data.push_back(rng.normal());
    for (std::size_t i = 0; i < n_anomaly; ++i)
        for (std::size_t j = 0; j < d; ++j) data.push_back(separation * direction[j] + rng.normal());

    Dataset out;
    out.features = Tensor::from_data({n, d}, std::move(data));
    out.labels.assign(n_normal, 0);
    out.labels.insert(out.labels.end(), n_anomaly, 1);
    out.feature_names.reserve(d);
    for (std::size_t j = 0; j < d; ++j) out.feature_names.push_back("x" + std::to_string(j));
    return out;
}

// --- manifests ---------------------------------------------------------------------

std::string fnv1a_hex(std::span<const unsigned char> bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for checksum: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return "fnv1a:" + fnv1a_hex(bytes);
}

DataManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset manifest: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + path.string() + ": " + e.what());
    }

    DataManifest m;
    const std::string type = j.value("type", "csv");
    if (type == "csv") {
        m.type = DataManifest::Type::csv;
        if (!j.contains("path")) throw ConfigError("manifest: csv type requires 'path'");
        m.csv_path = j.at("path").get<std::string>();
        m.csv_options.label_column = j.value("label_column", std::string{});
        std::string delim = j.value("delimiter", std::string{","});
        if (delim.size() != 1) throw ConfigError("manifest: delimiter must be one character");
        m.csv_options.delimiter = delim[0];
        if (j.contains("anomaly_values")) {
            m.csv_options.anomaly_values = j.at("anomaly_values").get<std::vector<std::string>>();
        }
        if (j.contains("categorical_columns")) {
            m.csv_options.categorical_columns =
                j.at("categorical_columns").get<std::vector<std::string>>();
        }
        m.checksum = j.value("checksum", std::string{});
    } else if (type == "synthetic_two_gaussian") {
        m.type = DataManifest::Type::synthetic;
        m.n_normal = j.value("n_normal", 2000u);
        m.n_anomaly = j.value("n_anomaly", 200u);
        m.dim = j.value("dim", 8u);
        m.separation = j.value("separation", 6.0);
        m.seed = j.value("seed", 7u);
    } else {
        throw ConfigError("manifest: unknown type '" + type + "'");
    }
    return m;
}

std::string manifest_to_json(const DataManifest& m) {
    json j;
    if (m.type == DataManifest::Type::csv) {
        j["type"] = "csv";
        j["path"] = m.csv_path.string();
        j["label_column"] = m.csv_options.label_column;
        j["delimiter"] = std::string(1, m.csv_options.delimiter);
        j["anomaly_values"] = m.csv_options.anomaly_values;
        j["categorical_columns"] = m.csv_options.categorical_columns;
        if (!m.checksum.empty()) j["checksum"] = m.checksum;
    } else {
        j["type"] = "synthetic_two_gaussian";
        j["n_normal"] = m.n_normal;
        j["n_anomaly"] = m.n_anomaly;
        j["dim"] = m.dim;
        j["separation"] = m.separation;
        j["seed"] = m.seed;
    }
    return j.dump(2);
}

Dataset load_dataset(const DataManifest& manifest, const std::filesystem::path& base_dir,
                     CsvSchema* schema) {
    if (manifest.type == DataManifest::Type::synthetic) {
        Rng rng(manifest.seed);
        return synthetic_two_gaussian(manifest.n_normal, manifest.n_anomaly, manifest.dim,
                                      manifest.separation, rng);
    }

    std::filesystem::path path = manifest.csv_path;
    if (path.is_relative()) {
        if (std::filesystem::exists(base_dir / path)) {
            path = base_dir / path;
        } else if (const char* env = std::getenv("DHAG_DATA_DIR");
                   env != nullptr && std::filesystem::exists(std::filesystem::path(env) / path)) {
            path = std::filesystem::path(env) / path;
        }
    }
    if (!std::filesystem::exists(path)) {
        throw IoError("dataset file not found: " + manifest.csv_path.string() +
                      " (searched relative to manifest and DHAG_DATA_DIR)");
    }
    if (!manifest.checksum.empty()) {
        const std::string actual = file_checksum(path);
        if (actual != manifest.checksum) {
            throw IoError("dataset checksum mismatch for " + path.string() + ": manifest has " +
                          manifest.checksum + ", file is " + actual);
        }
    }
    return load_csv(path, manifest.csv_options, schema);
}

}  // namespace dhag
