#pragma once

#include <string>

#include "gprn/train.hpp"

namespace gprn {

// Checkpoint container: `manifest.json` (dimensions, layout descriptor,
// normalization record, hyperparameters, metadata) next to `params.bin`, a
// raw little-endian float64 array holding the flat parameters followed by
// the training inputs. Writes are atomic (temp file + rename) and contain no
// timestamps, so identical runs produce byte-identical checkpoints.
void save_checkpoint(const std::string& dir, const TrainedModel& model);

TrainedModel load_checkpoint(const std::string& dir);

}  // namespace gprn
