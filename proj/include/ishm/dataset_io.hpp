#pragma once

#include "ishm/benchmark.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace ishm {

inline constexpr const char* kDataFile = "data.bin";
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr int kDatasetFormatVersion = 1;

// 64-bit FNV-1a, resumable: pass the previous result as `state`.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t state = kFnvOffset) noexcept;
std::uint64_t fnv1a64(std::string_view text, std::uint64_t state = kFnvOffset) noexcept;

// Writes `data.bin` (little-endian float64, [instance][channel][sample], no
// header) and `manifest.jsonl` (header line, then one record per instance).
// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Throws IoError, ShapeError or HashMismatch.
Dataset load_dataset(const std::filesystem::path& dir);

// One row per (instance, channel): id, channel, label, then the samples.
void export_csv(const Dataset& dataset, const std::filesystem::path& file);

// Content hash recorded in the manifest header, recomputed from memory.
std::uint64_t dataset_hash(const Dataset& dataset);

// Deterministic shuffle-split. Instances keep their original ids.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double train_fraction, std::uint64_t seed);

// Subset of instances by label.
Dataset filter_by_label(const Dataset& dataset, bool label);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    static constexpr double kEpsilon = 1e-8;

    bool operator==(const NormStats&) const = default;
};

NormStats norm_stats(const Dataset& train);
SignalMatrix apply_norm(const SignalMatrix& data, const NormStats& stats);
SignalInstance apply_norm(const SignalInstance& instance, const NormStats& stats);

}  // namespace ishm
