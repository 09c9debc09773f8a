#include "gss/io.h"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gss {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume little endian");

std::ofstream OpenOut(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("io", "cannot write " + path.string());
  return out;
}

std::ifstream OpenIn(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error("io", "cannot read " + path.string());
  return in;
}

class BinaryWriter {
 public:
  BinaryWriter(const fs::path& path, const char magic[4]) : out_(OpenOut(path, true)), path_(path) {
    out_.write(magic, 4);
  }
  void U32(uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void Doubles(const std::vector<double>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  ~BinaryWriter() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw Error("io", "write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  fs::path path_;
};

class BinaryReader {
 public:
  BinaryReader(const fs::path& path, const char magic[4]) : in_(OpenIn(path, true)), path_(path) {
    char got[4];
    in_.read(got, 4);
    if (!in_ || std::memcmp(got, magic, 4) != 0) {
      throw Error("bad_format", path.string() + ": expected magic " + std::string(magic, 4));
    }
  }
  uint32_t U32() {
    uint32_t v = 0;
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    Check();
    return v;
  }
  std::vector<double> Doubles(size_t n) {
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    Check();
    return v;
  }
  void ExpectEnd() {
    in_.peek();
    if (!in_.eof()) throw Error("bad_format", path_.string() + ": trailing bytes");
  }

 private:
  void Check() {
    if (!in_) throw Error("bad_format", path_.string() + ": truncated");
  }
  std::ifstream in_;
  fs::path path_;
};

void WriteRaw(const fs::path& path, int w, int h, uint32_t format, const std::vector<uint8_t>& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
    throw Error("io", "cannot write " + path.string() + ": " + image.message);
  }
}

std::vector<uint8_t> ReadRaw(const fs::path& path, uint32_t format, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("io", "cannot read " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<uint8_t> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error("io", "cannot decode " + path.string() + ": " + image.message);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return data;
}

std::string Pad(int i) {
  std::ostringstream s;
  s.width(5);
  s.fill('0');
  s << i;
  return s.str();
}

}  // namespace

void WritePng(const fs::path& path, const RgbImage& image) {
  std::vector<uint8_t> data(image.values.size());
  for (size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<uint8_t>(std::lround(Clamp255(image.values[i])));
  }
  WriteRaw(path, image.width, image.height, PNG_FORMAT_RGB, data);
}

RgbImage ReadPng(const fs::path& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> data = ReadRaw(path, PNG_FORMAT_RGB, w, h);
  RgbImage image(w, h);
  for (size_t i = 0; i < data.size(); ++i) image.values[i] = data[i];
  return image;
}

void WriteLabelPng(const fs::path& path, const LabelMap& map) {
  if (map.num_classes > 255) throw Error("io", "label PNGs hold at most 255 classes");
  std::vector<uint8_t> data(map.size());
  for (size_t i = 0; i < data.size(); ++i) {
    data[i] = map.IsLabeled(i) ? static_cast<uint8_t>(map.labels[i]) : 255;
  }
  WriteRaw(path, map.width, map.height, PNG_FORMAT_GRAY, data);
}

LabelMap ReadLabelPng(const fs::path& path, int num_classes) {
  int w = 0, h = 0;
  const std::vector<uint8_t> data = ReadRaw(path, PNG_FORMAT_GRAY, w, h);
  LabelMap map(w, h, num_classes);
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i] == 255) {
      map.labels[i] = num_classes;
    } else if (data[i] >= num_classes) {
      throw Error("invalid_label_map", path.string() + ": label out of range");
    } else {
      map.labels[i] = data[i];
    }
  }
  return map;
}

void WritePaletteCsv(const fs::path& path, const Palette& palette) {
  std::ofstream out = OpenOut(path);
  out << "class,r,g,b\n";
  char line[128];
  for (int k = 0; k < palette.num_classes(); ++k) {
    const Color& c = palette.colors[k];
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f\n", k, c[0], c[1], c[2]);
    out << line;
  }
}

Palette ReadPaletteCsv(const fs::path& path) {
  std::ifstream in = OpenIn(path);
  std::string line;
  if (!std::getline(in, line) || line != "class,r,g,b") {
    throw Error("bad_format", path.string() + ": missing header");
  }
  Palette palette;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int k = 0;
    Color c{};
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &k, &c[0], &c[1], &c[2]) != 4 ||
        k != palette.num_classes()) {
      throw Error("bad_format", path.string() + ": bad row '" + line + "'");
    }
    palette.colors.push_back(c);
  }
  return palette;
}

void SaveWindowClassifier(const fs::path& path, const WindowClassifier& model, const char magic[4]) {
  BinaryWriter w(path, magic);
  w.U32(static_cast<uint32_t>(model.num_classes));
  w.U32(static_cast<uint32_t>(model.window));
  w.Doubles(model.weights);
}

WindowClassifier LoadWindowClassifier(const fs::path& path, const char magic[4]) {
  BinaryReader r(path, magic);
  const int k = static_cast<int>(r.U32());
  const int window = static_cast<int>(r.U32());
  WindowClassifier model(window, k);
  model.weights = r.Doubles(model.weights.size());
  r.ExpectEnd();
  return model;
}

void SaveCodebook(const fs::path& path, const Codebook& codebook) {
  BinaryWriter w(path, "GSSC");
  w.U32(static_cast<uint32_t>(codebook.patch));
  w.U32(static_cast<uint32_t>(codebook.vocab));
  w.Doubles(codebook.codewords);
}

Codebook LoadCodebook(const fs::path& path) {
  BinaryReader r(path, "GSSC");
  Codebook cb;
  cb.patch = static_cast<int>(r.U32());
  cb.vocab = static_cast<int>(r.U32());
  cb.codewords = r.Doubles(static_cast<size_t>(cb.vocab) * cb.dim());
  r.ExpectEnd();
  return cb;
}

void SaveInverse(const fs::path& path, const InversePalette& inverse) {
  BinaryWriter w(path, "GSSI");
  w.U32(static_cast<uint32_t>(inverse.num_classes));
  w.Doubles(inverse.weights);
}

InversePalette LoadInverse(const fs::path& path) {
  BinaryReader r(path, "GSSI");
  InversePalette inv;
  inv.num_classes = static_cast<int>(r.U32());
  inv.weights = r.Doubles(3 * static_cast<size_t>(inv.num_classes));
  r.ExpectEnd();
  return inv;
}

void SavePredictor(const fs::path& path, const TokenPredictor& predictor) {
  BinaryWriter w(path, "GSSP");
  w.U32(static_cast<uint32_t>(predictor.patch));
  w.U32(static_cast<uint32_t>(predictor.vocab));
  w.U32(static_cast<uint32_t>(predictor.hidden));
  w.Doubles(predictor.w1);
  w.Doubles(predictor.w2);
}

TokenPredictor LoadPredictor(const fs::path& path) {
  BinaryReader r(path, "GSSP");
  const int patch = static_cast<int>(r.U32());
  const int vocab = static_cast<int>(r.U32());
  const int hidden = static_cast<int>(r.U32());
  TokenPredictor p(patch, vocab, hidden);
  p.w1 = r.Doubles(p.w1.size());
  p.w2 = r.Doubles(p.w2.size());
  r.ExpectEnd();
  return p;
}

void WriteJson(const fs::path& path, const nlohmann::ordered_json& json) {
  std::ofstream out = OpenOut(path);
  out << json.dump(2) << "\n";
}

nlohmann::json ReadJson(const fs::path& path) {
  std::ifstream in = OpenIn(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_format", path.string() + ": " + e.what());
  }
}

void SaveStage1(const fs::path& dir, const Stage1Artifacts& art) {
  fs::create_directories(dir);
  WritePaletteCsv(dir / "palette.csv", art.palette);
  fs::remove(dir / "inverse.bin");
  fs::remove(dir / "winv.bin");
  if (art.inverse) SaveInverse(dir / "inverse.bin", *art.inverse);
  if (art.window_inverse) SaveWindowClassifier(dir / "winv.bin", *art.window_inverse);
  SaveCodebook(dir / "codebook.bin", art.codebook);
  nlohmann::ordered_json report;
  report["variant"] = VariantName(art.variant);
  report["miou"] = art.report.miou;
  report["macc"] = art.report.macc;
  report["seed"] = art.seed;
  report["per_class_iou"] = art.report.per_class_iou;
  report["linear_rule"] = DecodeRuleName(art.linear_rule);
  report["gradient_steps"] = art.gradient_steps;
  report["vocab"] = art.codebook.vocab;
  report["kmeans_iterations"] = art.quantize_report.iterations;
  report["loss_curve"] = art.loss_curve;
  WriteJson(dir / "report.json", report);
}

Stage1Artifacts LoadStage1(const fs::path& dir) {
  Stage1Artifacts art;
  const nlohmann::json report = ReadJson(dir / "report.json");
  try {
    art.variant = ParseVariant(report.at("variant").get<std::string>());
    art.report.miou = report.at("miou").get<double>();
    art.report.macc = report.at("macc").get<double>();
    art.seed = report.at("seed").get<uint64_t>();
    art.linear_rule = ParseDecodeRule(report.value("linear_rule", std::string("projected")));
    art.gradient_steps = report.value("gradient_steps", 0L);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_format", (dir / "report.json").string() + ": " + e.what());
  }
  art.palette = ReadPaletteCsv(dir / "palette.csv");
  if (fs::exists(dir / "inverse.bin")) art.inverse = LoadInverse(dir / "inverse.bin");
  if (fs::exists(dir / "winv.bin")) art.window_inverse = LoadWindowClassifier(dir / "winv.bin");
  if (!art.inverse && !art.window_inverse) {
    throw Error("bad_format", dir.string() + ": neither inverse.bin nor winv.bin");
  }
  art.codebook = LoadCodebook(dir / "codebook.bin");
  return art;
}

void SaveDataset(const fs::path& dir, const Dataset& data, const nlohmann::ordered_json& meta) {
  nlohmann::ordered_json manifest = meta;
  const int k = data.train.empty() ? data.test.front().labels.num_classes
                                   : data.train.front().labels.num_classes;
  manifest["num_classes"] = k;
  for (const char* split : {"train", "test"}) {
    const std::vector<Sample>& samples = std::string(split) == "train" ? data.train : data.test;
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (size_t i = 0; i < samples.size(); ++i) {
      const std::string image = std::string(split) + "/" + Pad(static_cast<int>(i)) + "_image.png";
      const std::string label = std::string(split) + "/" + Pad(static_cast<int>(i)) + "_label.png";
      WritePng(dir / image, samples[i].image);
      WriteLabelPng(dir / label, samples[i].labels);
      pairs.push_back({{"image", image}, {"label", label}});
    }
    manifest[split] = pairs;
  }
  WriteJson(dir / "manifest.json", manifest);
}

Dataset LoadDataset(const fs::path& dir) {
  const nlohmann::json manifest = ReadJson(dir / "manifest.json");
  Dataset data;
  try {
    const int k = manifest.at("num_classes").get<int>();
    for (const char* split : {"train", "test"}) {
      std::vector<Sample>& samples = std::string(split) == "train" ? data.train : data.test;
      for (const auto& pair : manifest.at(split)) {
        Sample s;
        s.image = ReadPng(dir / pair.at("image").get<std::string>());
        s.labels = ReadLabelPng(dir / pair.at("label").get<std::string>(), k);
        samples.push_back(std::move(s));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_format", (dir / "manifest.json").string() + ": " + e.what());
  }
  return data;
}

}  // namespace gss
