#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gss/pipeline.h"

namespace gss {

// Plain-text experiment configuration, one `key = value` per line. `#`
// starts a comment. Unknown keys and malformed values are errors
// ("config_parse").
//
//   seed                      root seed (u64)
//   data.width / data.height / data.classes / data.train / data.test
//   data.min_shapes / data.max_shapes / data.noise_sigma / data.unlabeled_fraction
//   stage1.variant            FF | FF-R | FT | TF | TT
//   stage1.decode             projected | argmax
//   stage1.holdout            fraction of training maps held out for the stage I report
//   vq.patch / vq.vocab / vq.max_iters / vq.tol
//   ft.window / ft.epochs / ft.lr / ft.batch / ft.max_pixels / ft.noise_sigma
//   tf.steps / tf.lr / tf.gumbel / tf.bound_ratio / tf.batch_maps
//   tf.estimator              soft | identity
//   tf.temperature
//   aux.window / aux.epochs / aux.lr / aux.batch / aux.max_pixels
//   predictor.epochs / predictor.lr / predictor.batch / predictor.momentum
//   predictor.weight_decay / predictor.hidden / predictor.hidden_units
//   stage2.unlabeled          auxiliary | junk
//   repro.table1_seeds / repro.table3_seeds / repro.table3_unlabeled
using KeyValues = std::map<std::string, std::string>;

KeyValues ParseKeyValues(const std::string& text);
KeyValues ReadKeyValueFile(const std::filesystem::path& path);

struct ConfigBundle {
  ExperimentConfig experiment = DefaultExperiment();
  ReproOptions repro;
};

// Later calls override earlier ones, so flags are applied after the file.
void ApplyConfig(ConfigBundle& bundle, const KeyValues& values);

// Every key with its current value, in the file syntax.
std::string DumpConfig(const ConfigBundle& bundle);

}  // namespace gss
