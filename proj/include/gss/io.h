#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gss/core.h"
#include "gss/pipeline.h"
#include "gss/stage1.h"
#include "gss/stage2.h"
#include "gss/vq.h"
#include "gss/window_classifier.h"

namespace gss {

namespace fs = std::filesystem;

// 8-bit RGB; values are rounded and clamped on write. Gray, palette and alpha
// inputs are expanded / dropped on read.
void WritePng(const fs::path& path, const RgbImage& image);
RgbImage ReadPng(const fs::path& path);

// 8-bit gray, value = class id, the unlabeled sentinel stored as 255.
void WriteLabelPng(const fs::path& path, const LabelMap& map);
LabelMap ReadLabelPng(const fs::path& path, int num_classes);

// Header `class,r,g,b`, one row per class.
void WritePaletteCsv(const fs::path& path, const Palette& palette);
Palette ReadPaletteCsv(const fs::path& path);

// Flat binaries: 4-byte magic, little-endian u32 shape fields, then f64
// values row-major.
//   GSSW / GSSA  window classifier (inverse / auxiliary head): K, w
//   GSSC         codebook: p, V
//   GSSI         inverse palette: K
//   GSSP         token predictor: p, V, h
void SaveWindowClassifier(const fs::path& path, const WindowClassifier& model,
                          const char magic[4] = "GSSW");
WindowClassifier LoadWindowClassifier(const fs::path& path, const char magic[4] = "GSSW");
void SaveCodebook(const fs::path& path, const Codebook& codebook);
Codebook LoadCodebook(const fs::path& path);
void SaveInverse(const fs::path& path, const InversePalette& inverse);
InversePalette LoadInverse(const fs::path& path);
void SavePredictor(const fs::path& path, const TokenPredictor& predictor);
TokenPredictor LoadPredictor(const fs::path& path);

void WriteJson(const fs::path& path, const nlohmann::ordered_json& json);
nlohmann::json ReadJson(const fs::path& path);

// palette.csv, inverse.bin or winv.bin, codebook.bin, report.json.
void SaveStage1(const fs::path& dir, const Stage1Artifacts& artifacts);
Stage1Artifacts LoadStage1(const fs::path& dir);

// <split>/<index>_image.png and <split>/<index>_label.png plus manifest.json.
void SaveDataset(const fs::path& dir, const Dataset& data, const nlohmann::ordered_json& meta);
Dataset LoadDataset(const fs::path& dir);

}  // namespace gss
