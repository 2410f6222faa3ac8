#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgdiff/config.hpp"
#include "pgdiff/denoiser.hpp"
#include "pgdiff/schedule.hpp"
#include "pgdiff/tensor.hpp"

namespace pgdiff {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor file: one JSON header line {"shape", "dtype": "float32",
/// "provenance"} followed by the little-endian float32 payload.
void save_tensor(const fs::path& path, const Tensor& t, const Json& provenance = Json::object());
struct LoadedTensor {
    Tensor tensor;
    Json provenance;
};
LoadedTensor load_tensor(const fs::path& path);

/// Rounds every value to float32, the precision tensor files store.
Tensor round_to_float(const Tensor& t);

/// Binary PGM (P5) holding raw class labels.
void save_pgm(const fs::path& path, const ClassMask& mask);
ClassMask load_pgm(const fs::path& path, int classes);

/// Colour PNG: background black, live red, dead orange.
void save_mask_png(const fs::path& path, const ClassMask& mask);

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public IoError {
public:
    using IoError::IoError;
};
class CheckpointTruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
/// Declared shapes and payload byte length disagree.
class CheckpointLengthError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

struct CheckpointMeta {
    std::vector<double> betas;
    std::uint64_t seed = 0;
    int epoch = 0;
    double loss = 0.0;
};

struct Checkpoint {
    DenoiserParams params;
    CheckpointMeta meta;
};

/// "PGDC" | u32 version | u64 header length | JSON header | u64 payload
/// length | float32 payload, integers little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const DenoiserParams& params, const CheckpointMeta& meta);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const fs::path& path, const DenoiserParams& params, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const fs::path& path);

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Dataset directory: images/<id>.tensor, masks/<id>.pgm and manifest.json
/// recording the scene config, seed and split membership.
void save_dataset(const fs::path& dir, const Dataset& d, const SceneConfig& cfg, std::uint64_t seed);
struct StoredDataset {
    Dataset data;
    SceneConfig config;
    std::uint64_t seed = 0;
};
StoredDataset load_dataset(const fs::path& dir);

}  // namespace pgdiff
