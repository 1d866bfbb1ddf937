#pragma once

#include <string>
#include <utility>
#include <vector>

#include "onedf/config.hpp"
#include "onedf/params.hpp"

namespace onedf {

/// Named-tensor container ("1DF1"): every learnable tensor under its dotted
/// registry name, optimizer state under "optim.", plus the model config and
/// training epoch. Round-trips bit-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, TensorPtr>> tensors;
  ModelConfig model;
  int epoch = 0;
  double best_val_nrmse = -1.0;  // best validation NRMSE seen so far, if any
  int best_epoch = 0;

  TensorPtr find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint payloads into the registry. Every registry entry must
/// exist with the exact extents, and every non-"optim." checkpoint entry
/// must be expected; violations raise one error carrying the complete diff
/// (missing / unexpected / extent mismatches).
void apply_checkpoint(const Checkpoint& ckpt, ParamRegistry& params);

}  // namespace onedf
