#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gss/stage1.h"
#include "gss/stage2.h"
#include "gss/synthdata.h"

namespace gss {

struct InferResult {
  LatentGrid tokens;
  Maskige maskige;
  LabelMap labels;
};

// Non-autoregressive: every cell takes its argmax token independently.
InferResult Infer(const RgbImage& image, const TokenPredictor& predictor,
                  const Stage1Artifacts& artifacts);

struct DataConfig {
  int width = 64;
  int height = 64;
  int num_classes = 8;
  int train_count = 500;
  int test_count = 100;
  int min_shapes = 2;
  int max_shapes = 5;
  double noise_sigma = 8.0;
  double unlabeled_fraction = 0.0;
};

// How unlabeled training pixels reach stage I / II.
//   kAuxiliary: filled by the auxiliary head (composed labels).
//   kJunk: mapped to an extra class K; predicting it at test time counts as
//     a miss.
enum class UnlabeledMode { kAuxiliary, kJunk };

std::string UnlabeledModeName(UnlabeledMode mode);
UnlabeledMode ParseUnlabeledMode(const std::string& name);

struct Stage2Config {
  WindowTrainOptions auxiliary{5, 3, 0.5, 32, 200000};
  PredictorOptions predictor;
  UnlabeledMode unlabeled = UnlabeledMode::kAuxiliary;
};

struct ExperimentConfig {
  DataConfig data;
  Stage1Config stage1;
  Stage2Config stage2;
  // Fraction of the (composed) training maps held out for the stage I report.
  double stage1_holdout = 0.1;
  uint64_t seed = 0;
};

// Stage I / II sub-configs with their variant-specific parts filled in.
ExperimentConfig DefaultExperiment();

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Scene textures and both splits derive from `seed`.
Dataset MakeDataset(const DataConfig& data, uint64_t seed);

struct RunReport {
  std::string variant;
  std::string unlabeled_mode;
  double miou = 0.0;
  double macc = 0.0;
  double pixel_accuracy = 0.0;
  std::vector<double> per_class_iou;
  // Argmax tokens vs Tokenize(Encode(gt)) on test cells without unlabeled
  // pixels.
  double token_accuracy = 0.0;
  double stage1_miou = 0.0;
  double stage1_macc = 0.0;
  double predictor_initial_loss = 0.0;
  double predictor_final_loss = 0.0;
  int predictor_hidden = 0;
  int vocab = 0;
  long stage1_gradient_steps = 0;
  // Every k-means objective trace of the run was non-increasing.
  bool kmeans_monotone = true;
  uint64_t seed = 0;
  std::map<std::string, uint64_t> component_seeds;
  std::map<std::string, double> timings;
};

struct RunArtifacts {
  Stage1Artifacts stage1;
  std::optional<AuxiliaryHead> auxiliary;
  TokenPredictor predictor;
};

// Training label maps as stage I / II see them: composed with the auxiliary
// head's pseudo labels (head trained only when unlabeled pixels exist), or
// with the sentinel promoted to a junk class.
struct PreparedMaps {
  std::vector<LabelMap> maps;
  std::optional<AuxiliaryHead> head;
};

PreparedMaps PrepareTrainingMaps(std::span<const Sample> train, const ExperimentConfig& config);

// Stage I on the prepared maps; the last `stage1_holdout` fraction is held
// out for the reconstruction report.
Stage1Artifacts FitStage1(std::span<const LabelMap> maps, const ExperimentConfig& config);

TrainedTokenPredictor FitStage2(std::span<const Sample> train, std::span<const LabelMap> maps,
                                const Stage1Artifacts& stage1, const ExperimentConfig& config);

// stage I -> stage II -> inference on the test split.
RunReport EvaluateRun(const Dataset& data, const ExperimentConfig& config,
                      RunArtifacts* artifacts = nullptr);

// Infers every test image and fills the test-side fields of `report`
// (miou, macc, pixel and token accuracy). Artifacts with one class more than
// the test maps are treated as junk-class models.
void ScoreTestSplit(std::span<const Sample> test, const Stage1Artifacts& artifacts,
                    const TokenPredictor& predictor, RunReport& report);

// Maps labels of the junk class (id K of a K + 1 class map) to the K-class
// sentinel.
LabelMap DropJunkClass(const LabelMap& map);

nlohmann::ordered_json ToJson(const RunReport& report, bool with_timings = true);

double Median(std::vector<double> values);

bool NonIncreasing(const std::vector<double>& values);

struct ReproOptions {
  int table1_seeds = 10;
  int table3_seeds = 5;
  double table3_unlabeled = 0.2;
  bool run_table1 = true;
  bool run_table3 = true;
  bool run_end_to_end = true;
};

// The acceptance experiments: stage I variant sweep, unlabeled-area
// ablation and the end-to-end run. `timings` is the only nondeterministic key.
nlohmann::ordered_json Repro(const ExperimentConfig& config, const ReproOptions& options);

}  // namespace gss
