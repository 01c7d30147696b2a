// Copyright (c) 2026, The carte-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "carte/finetune.hpp"
#include "carte/model.hpp"
#include "carte/pretrain.hpp"
#include "carte/transfer.hpp"

/// Checkpoint layout (all integers little-endian):
///
///   bytes 0-7    magic "CARTECKP"
///   bytes 8-15   uint64 header length H
///   next H bytes UTF-8 JSON header: version, kind, configs and a tensor
///                manifest [{name, shape, offset, nbytes, checksum}]
///   remainder    payload: float32 values of every tensor, row-major, at the
///                manifest offsets (relative to the payload start)
///
/// The checksum is 64-bit FNV-1a over a tensor's payload bytes.
namespace carte {

inline constexpr std::string_view kCheckpointVersion = "1.0";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelCheckpoint {
  ModelConfig config;
  ModelParams params;
  EmbeddingRef embedding;
  std::optional<TrainConfig> train;
  std::optional<SamplerConfig> sampler;
};

std::string encode_model(const ModelCheckpoint& checkpoint);
ModelCheckpoint decode_model(std::string_view bytes);
std::string encode_estimator(const Estimator& estimator);
Estimator decode_estimator(std::string_view bytes);
std::string encode_ensemble(const EnsemblePredictor& ensemble);
EnsemblePredictor decode_ensemble(std::string_view bytes);

/// "model", "estimator" or "ensemble".
std::string checkpoint_kind(std::string_view bytes);

void save_model(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_model(const std::filesystem::path& path);
void save_estimator(const Estimator& estimator, const std::filesystem::path& path);
Estimator load_estimator(const std::filesystem::path& path);
void save_ensemble(const EnsemblePredictor& ensemble, const std::filesystem::path& path);
EnsemblePredictor load_ensemble(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

/// Rounds every value to float32, as a save/load cycle would.
void round_to_float(Tensor& t);

}  // namespace carte
