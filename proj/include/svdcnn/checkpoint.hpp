#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "svdcnn/training.hpp"

namespace svdcnn {

/// Binary layout, all integers little-endian:
///
///   "SVDC"  u16 version
///   u32 x 8 spec: family, depth, seq_len, embedding_dim, vocab_size,
///                 n_classes, fc_hidden, k
///   per stored array, in Model::for_each_tensor order:
///           u64 length, length x f32
///   trailer: u32 epoch, u32 n, n x (u32 epoch, f64 train_loss, f64 val_accuracy)
inline constexpr char kCheckpointMagic[4] = {'S', 'V', 'D', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  Model<float> model;
  int epoch = 0;
  std::vector<EpochRecord> history;
};

void save_checkpoint(Model<float>& model, const std::filesystem::path& path, int epoch = 0,
                     const std::vector<EpochRecord>& history = {});

/// Validates magic, version, spec and every array length before returning.
/// The model comes back in eval mode.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace svdcnn
