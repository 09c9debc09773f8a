#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "gss/codec.h"
#include "gss/config.h"
#include "gss/io.h"
#include "gss/palette.h"
#include "gss/pipeline.h"

namespace {

using namespace gss;

struct GlobalFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
};

ConfigBundle LoadBundle(const GlobalFlags& flags) {
  ConfigBundle bundle;
  if (!flags.config.empty()) ApplyConfig(bundle, ReadKeyValueFile(flags.config));
  KeyValues extra;
  for (const std::string& kv : flags.overrides) {
    const KeyValues parsed = ParseKeyValues(kv);
    if (parsed.size() != 1) throw Error("config_parse", "--set expects key=value, got '" + kv + "'");
    extra.insert(parsed.begin(), parsed.end());
  }
  if (flags.seed) extra["seed"] = std::to_string(*flags.seed);
  ApplyConfig(bundle, extra);
  return bundle;
}

std::array<int, 3> ParseTriple(const std::string& text) {
  std::array<int, 3> out{};
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d%c", &out[0], &out[1], &out[2], &tail) != 3) {
    throw Error("config_parse", "expected r,g,b, got '" + text + "'");
  }
  return out;
}

void RunGenData(const ConfigBundle& bundle, const std::string& out) {
  const ExperimentConfig& e = bundle.experiment;
  const Dataset data = MakeDataset(e.data, DeriveSeed(e.seed, "dataset"));
  nlohmann::ordered_json meta;
  meta["seed"] = e.seed;
  meta["width"] = e.data.width;
  meta["height"] = e.data.height;
  meta["noise_sigma"] = e.data.noise_sigma;
  meta["unlabeled_fraction"] = e.data.unlabeled_fraction;
  SaveDataset(out, data, meta);
  std::cout << "wrote " << data.train.size() << " train / " << data.test.size() << " test samples to "
            << out << "\n";
}

struct PaletteFlags {
  int classes = 0;
  std::optional<int> interval;
  std::string start;
  std::optional<double> jitter;
  std::vector<int> refine;
  bool random = false;
  std::string out = "palette.csv";
};

void RunPalette(const ConfigBundle& bundle, const PaletteFlags& f) {
  Rng rng(DeriveSeed(bundle.experiment.seed, "palette"));
  nlohmann::ordered_json diag;
  Palette palette;
  if (f.random) {
    palette = GenerateRandom(f.classes, rng);
    diag["kind"] = "random";
  } else {
    PaletteSpec spec = PaletteSpec::ForClasses(f.classes);
    if (f.interval) {
      spec.intervals = {*f.interval, *f.interval, *f.interval};
      spec.starts = {0, 0, 0};
      spec.jitter_bound = 0.0;
    }
    if (!f.start.empty()) spec.starts = ParseTriple(f.start);
    if (f.jitter) spec.jitter_bound = *f.jitter;
    spec.refine_classes = f.refine;
    const std::vector<Color> base = BaseColors(spec);
    palette = GenerateMaxDistance(spec, rng);
    diag["kind"] = "max_distance";
    diag["intervals"] = spec.intervals;
    diag["starts"] = spec.starts;
    diag["jitter_bound"] = spec.jitter_bound;
    diag["sequence_lengths"] = SequenceLengths(spec);
    diag["first_base"] = base.front();
    diag["last_base"] = base.back();
  }
  diag["num_classes"] = palette.num_classes();
  if (palette.num_classes() >= 2) diag["min_pairwise_distance"] = MinPairwiseDistance(palette);
  try {
    const InversePalette inv = LeastSquaresInverse(palette);
    diag["inverse_residual"] = InverseResidual(palette, inv);
    diag["normal_equation_error"] = NormalEquationError(palette, inv);
    diag["linear_decode_exact"] = LinearDecodeIsExact(palette, inv);
  } catch (const Error& e) {
    diag["inverse"] = e.code();
  }
  WritePaletteCsv(f.out, palette);
  fs::path diag_path = f.out;
  diag_path.replace_extension(".json");
  WriteJson(diag_path, diag);
  std::cout << diag.dump(2) << "\n";
}

void RunStage1Command(const ConfigBundle& bundle, const std::string& data_dir, const std::string& out) {
  const Dataset data = LoadDataset(data_dir);
  const PreparedMaps prepared = PrepareTrainingMaps(data.train, bundle.experiment);
  const Stage1Artifacts art = FitStage1(prepared.maps, bundle.experiment);
  SaveStage1(out, art);
  if (prepared.head) SaveWindowClassifier(fs::path(out) / "aux.bin", *prepared.head, "GSSA");
  std::cout << VariantName(art.variant) << " reconstruction miou=" << art.report.miou
            << " macc=" << art.report.macc << "\n";
}

void RunStage2Command(const ConfigBundle& bundle, const std::string& data_dir,
                      const std::string& stage1_dir, const std::string& out) {
  const Dataset data = LoadDataset(data_dir);
  const Stage1Artifacts stage1 = LoadStage1(stage1_dir);
  const PreparedMaps prepared = PrepareTrainingMaps(data.train, bundle.experiment);
  if (prepared.maps.front().num_classes != stage1.palette.num_classes()) {
    throw Error("class_count_mismatch", "stage I artifacts were built for a different label mode");
  }
  const TrainedTokenPredictor trained = FitStage2(data.train, prepared.maps, stage1, bundle.experiment);
  fs::create_directories(out);
  SavePredictor(fs::path(out) / "predictor.bin", trained.model);
  if (prepared.head) SaveWindowClassifier(fs::path(out) / "aux.bin", *prepared.head, "GSSA");
  nlohmann::ordered_json report;
  report["initial_loss"] = trained.initial_loss;
  report["epoch_losses"] = trained.epoch_losses;
  report["final_loss"] = trained.final_loss();
  report["hidden"] = trained.model.hidden;
  if (trained.linear_plateau) report["linear_plateau"] = *trained.linear_plateau;
  report["gradient_steps"] = trained.gradient_steps;
  report["seed"] = bundle.experiment.seed;
  WriteJson(fs::path(out) / "report.json", report);
  std::cout << "token predictor loss " << trained.initial_loss << " -> " << trained.final_loss() << "\n";
}

void RunInferCommand(const std::string& data_dir, const std::string& stage1_dir,
                     const std::string& stage2_dir, const std::string& split, const std::string& out) {
  const Dataset data = LoadDataset(data_dir);
  const Stage1Artifacts stage1 = LoadStage1(stage1_dir);
  const TokenPredictor predictor = LoadPredictor(fs::path(stage2_dir) / "predictor.bin");
  if (split != "train" && split != "test") throw Error("config_parse", "split must be train or test");
  const std::vector<Sample>& samples = split == "train" ? data.train : data.test;
  for (size_t i = 0; i < samples.size(); ++i) {
    const InferResult r = Infer(samples[i].image, predictor, stage1);
    const bool junk = r.labels.num_classes == samples[i].labels.num_classes + 1;
    char name[32];
    std::snprintf(name, sizeof name, "%05zu", i);
    WriteLabelPng(fs::path(out) / (std::string(name) + "_labels.png"), junk ? DropJunkClass(r.labels) : r.labels);
    WritePng(fs::path(out) / (std::string(name) + "_maskige.png"), r.maskige);
  }
  std::cout << "wrote " << samples.size() << " predictions to " << out << "\n";
}

void RunEvalCommand(const ConfigBundle& bundle, const std::string& data_dir,
                    const std::string& stage1_dir, const std::string& stage2_dir,
                    const std::string& out) {
  const Dataset data = LoadDataset(data_dir);
  RunReport report;
  if (!stage1_dir.empty() || !stage2_dir.empty()) {
    if (stage1_dir.empty() || stage2_dir.empty()) {
      throw Error("config_parse", "--stage1 and --stage2 go together");
    }
    const Stage1Artifacts stage1 = LoadStage1(stage1_dir);
    const TokenPredictor predictor = LoadPredictor(fs::path(stage2_dir) / "predictor.bin");
    report.variant = VariantName(stage1.variant);
    report.unlabeled_mode = UnlabeledModeName(bundle.experiment.stage2.unlabeled);
    report.stage1_miou = stage1.report.miou;
    report.stage1_macc = stage1.report.macc;
    report.stage1_gradient_steps = stage1.gradient_steps;
    report.vocab = stage1.codebook.vocab;
    report.predictor_hidden = predictor.hidden;
    report.seed = bundle.experiment.seed;
    ScoreTestSplit(data.test, stage1, predictor, report);
  } else {
    report = EvaluateRun(data, bundle.experiment);
  }
  WriteJson(out, ToJson(report));
  std::cout << "miou=" << report.miou << " macc=" << report.macc
            << " token_accuracy=" << report.token_accuracy << "\n";
}

void RunReproCommand(const ConfigBundle& bundle, const std::string& out) {
  const nlohmann::ordered_json report = Repro(bundle.experiment, bundle.repro);
  WriteJson(fs::path(out) / "report.json", report);
  std::cout << report.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative semantic segmentation at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  app.add_option("--config", flags.config, "key = value configuration file");
  app.add_option("--set", flags.overrides, "override one config key (key=value), repeatable");
  app.add_option("--seed", flags.seed, "root seed");

  std::string out, data_dir, stage1_dir, stage2_dir, split = "test";

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen->add_option("--out", out, "dataset directory")->required();

  PaletteFlags pal;
  auto* palette = app.add_subcommand("palette", "generate a palette and its diagnostics");
  palette->add_option("--classes", pal.classes, "number of classes")->required()->check(CLI::PositiveNumber);
  palette->add_option("--interval", pal.interval, "uniform channel interval (start 0, no jitter)");
  palette->add_option("--start", pal.start, "channel starts r,g,b");
  palette->add_option("--jitter", pal.jitter, "jitter bound");
  palette->add_option("--refine", pal.refine, "class ids to refine");
  palette->add_flag("--random", pal.random, "uniform random palette instead");
  palette->add_option("--out", pal.out, "CSV path");

  auto* stage1 = app.add_subcommand("stage1", "latent posterior learning");
  stage1->add_option("--data", data_dir, "dataset directory")->required();
  stage1->add_option("--out", out, "artifact directory")->required();

  auto* stage2 = app.add_subcommand("stage2", "latent prior learning");
  stage2->add_option("--data", data_dir, "dataset directory")->required();
  stage2->add_option("--stage1", stage1_dir, "stage I artifacts")->required();
  stage2->add_option("--out", out, "artifact directory")->required();

  auto* infer = app.add_subcommand("infer", "predict label and maskige PNGs");
  infer->add_option("--data", data_dir, "dataset directory")->required();
  infer->add_option("--stage1", stage1_dir, "stage I artifacts")->required();
  infer->add_option("--stage2", stage2_dir, "stage II artifacts")->required();
  infer->add_option("--split", split, "train or test");
  infer->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score the test split (trains first without artifacts)");
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--stage1", stage1_dir, "stage I artifacts");
  eval->add_option("--stage2", stage2_dir, "stage II artifacts");
  eval->add_option("--out", out, "report path")->default_val("report.json");

  auto* repro = app.add_subcommand("repro", "run the acceptance experiments");
  repro->add_option("--out", out, "output directory")->default_val("acceptance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config_parse: " << e.what() << "\n";
    return 2;
  }

  try {
    const ConfigBundle bundle = LoadBundle(flags);
    if (*gen) RunGenData(bundle, out);
    if (*palette) RunPalette(bundle, pal);
    if (*stage1) RunStage1Command(bundle, data_dir, out);
    if (*stage2) RunStage2Command(bundle, data_dir, stage1_dir, out);
    if (*infer) RunInferCommand(data_dir, stage1_dir, stage2_dir, split, out);
    if (*eval) RunEvalCommand(bundle, data_dir, stage1_dir, stage2_dir, out);
    if (*repro) RunReproCommand(bundle, out);
  } catch (const Error& e) {
    std::cerr << e.code() << ": " << e.what() << "\n";
    return e.code() == "config_parse" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
