#ifndef SAG_CHECKPOINT_HPP
#define SAG_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/model.hpp"
#include "sag/tape.hpp"
#include "sag/training.hpp"

namespace sag {

/// One serialized tensor, identified by its parameter name.
struct NamedTensor {
    std::string name;
    Tensor value;
};

/**
 * Everything needed to reproduce a trained model's predictions exactly:
 * configuration, the driver statistics its inputs were standardized with,
 * the reservoir assignment, and the weights themselves.  Variants that rely
 * on the frozen forecaster also carry its weights, since the hidden-state
 * cache is rebuilt from them deterministically.
 */
struct Checkpoint {
    std::string variant;
    std::uint64_t seed = 0;
    SagConfig model_config;
    TrainConfig train_config;
    DriverStats driver_stats;
    std::vector<std::uint8_t> use_data_release;  // empty for the baseline
    std::vector<NamedTensor> main_params;
    std::vector<NamedTensor> forecaster_params;  // empty unless needed
};

/// Copy a parameter list's values into named tensors, preserving order.
std::vector<NamedTensor> snapshot_params(
    const std::vector<const Parameter*>& params);

/**
 * Write values back into a parameter list.  Matching is by name; a missing
 * name, an extra name, or a shape mismatch is a DataError — a checkpoint
 * either fits the model exactly or is rejected.
 */
void restore_params(const std::vector<Parameter*>& params,
                    const std::vector<NamedTensor>& stored);

/// Serialize to JSON.  Identical checkpoints produce identical bytes.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);

/// Parse and structurally validate a checkpoint file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sag

#endif  // SAG_CHECKPOINT_HPP
