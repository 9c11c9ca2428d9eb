#pragma once

// Binary checkpoint ("ADVT"). All integers little-endian.
//
//   magic "ADVT" | u32 version | u32 model kind
//   config: u32 window height width action_dim enc[3] dec[3] kernel stride
//           padding fc_hidden | f64 action mean[3] std[3]
//   u32 parameter count, then per parameter:
//       u32 name length | name (UTF-8) | u32 rank | u32 dims[rank] | f32 data
//   u32 optimizer flag; when 1: u64 step, then per parameter f32 m, f32 v

#include <filesystem>
#include <optional>
#include <stdexcept>

#include "framepred/adam.hpp"
#include "framepred/models.hpp"

namespace framepred {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    PredictiveModel<float> model;
    std::optional<AdamState<float>> optimizer;
};

void save_checkpoint(const PredictiveModel<float>& model, const AdamState<float>* optimizer,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint parameters into an already built model. Throws
/// FormatError naming the first parameter whose name or shape disagrees.
void load_parameters_into(PredictiveModel<float>& model, const std::filesystem::path& path);

}  // namespace framepred
