#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dhag/rng.hpp"
#include "dhag/tensor.hpp"

namespace dhag {

struct Dataset {
    Tensor features;  // [n x d], graph-free
    std::vector<int> labels;  // 0 normal, 1 anomaly
    std::vector<std::string> feature_names;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.defined() ? features.cols() : 0; }
    std::size_t count_anomalies() const;
    Dataset subset(const std::vector<std::size_t>& idx) const;
};

// --- CSV ingestion -----------------------------------------------------------

struct CsvOptions {
    char delimiter = ',';
    std::string label_column;
    // Raw label-cell values treated as anomalies (label 1); everything else is
    // 0. Empty means the column must already hold 0/1.
    std::vector<std::string> anomaly_values;
    std::vector<std::string> categorical_columns;  // expanded one-hot
};

// One-hot vocabulary fitted on the first file and reused on later ones so
// feature layouts line up; unknown categories map to all-zeros with a warning.
struct CsvSchema {
    std::map<std::string, std::vector<std::string>> categories;  // column -> sorted values
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options,
                 CsvSchema* schema = nullptr);

// --- normalization -----------------------------------------------------------

enum class NormMode { zscore, minmax };

NormMode norm_mode_from_string(const std::string& s);
std::string to_string(NormMode mode);

// x' = (x - shift) / scale per column; degenerate columns (zero variance /
// zero range) are centered only (scale 1).
struct NormStats {
    NormMode mode = NormMode::zscore;
    std::vector<double> shift;
    std::vector<double> scale;

    std::vector<double> apply_row(std::span<const double> row) const;
};

NormStats fit_normalizer(const Dataset& train, NormMode mode);
Dataset apply_normalizer(const NormStats& stats, const Dataset& ds);

// Fits on train, applies the same affine transform everywhere.
NormStats normalize(Dataset& train, const std::vector<Dataset*>& others, NormMode mode);

// --- splitting ----------------------------------------------------------------

enum class SplitProtocol { goad_style, semisup_60_40, fraction };

SplitProtocol split_protocol_from_string(const std::string& s);
std::string to_string(SplitProtocol p);

struct SplitSpec {
    SplitProtocol protocol = SplitProtocol::goad_style;
    double train_fraction = 0.5;  // fraction protocol only
    double gamma = 0.0;           // known-anomaly ratio N_s / (N_tr + N_s)
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    Dataset train;              // unlabeled training pool (believed normal)
    Dataset labeled_anomalies;  // gamma-selected known anomalies
    Dataset test;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> labeled_idx;
    std::vector<std::size_t> test_idx;
};

// goad_style: half the normals to train, the rest plus all anomalies to test.
// fraction: goad_style with a configurable normal fraction.
// semisup_60_40: stratified 60/40 keeping the anomaly proportion in both
// sides; the training side keeps its anomalies as unlabeled contamination,
// minus the N_s = round(gamma * train_size) drawn as labeled anomalies.
SplitResult split(const Dataset& dataset, const SplitSpec& spec, Rng& rng);

// --- synthetic fixture ---------------------------------------------------------

// Normals ~ N(0, I_d); anomalies ~ N(separation * u, I_d) for one random unit
// direction u.
Dataset synthetic_two_gaussian(std::size_t n_normal, std::size_t n_anomaly, std::size_t d,
                               double separation, Rng& rng);

// --- manifests ------------------------------------------------------------------

// Self-describing dataset source: either a CSV with its parse options (and an
// optional fnv1a-64 content checksum) or a synthetic generator spec.
struct DataManifest {
    enum class Type { csv, synthetic };
    Type type = Type::csv;

    // csv
    std::filesystem::path csv_path;
    CsvOptions csv_options;
    std::string checksum;  // "fnv1a:<hex>", empty to skip verification

    // synthetic
    std::size_t n_normal = 0;
    std::size_t n_anomaly = 0;
    std::size_t dim = 0;
    double separation = 0.0;
    std::uint64_t seed = 0;
};

DataManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DataManifest& manifest);

// base_dir resolves relative csv paths (manifest directory, then
// DHAG_DATA_DIR).
Dataset load_dataset(const DataManifest& manifest, const std::filesystem::path& base_dir,
                     CsvSchema* schema = nullptr);

std::string fnv1a_hex(std::span<const unsigned char> bytes);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace dhag
