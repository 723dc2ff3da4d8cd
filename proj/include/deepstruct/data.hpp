#pragma once

#include <string>
#include <vector>

#include "deepstruct/config.hpp"
#include "deepstruct/parallel.hpp"

namespace deepstruct {

struct Dataset {
  int word_length = 0;
  int height = 28;
  int width = 28;
  struct Sample {
    std::vector<unsigned char> labels;  // 0 = 'a'
    std::vector<float> image;           // word_length * height * width, in [0,1]
    bool operator==(const Sample&) const = default;
  };
  std::vector<Sample> samples;

  int slot_pixels() const { return height * width; }
  bool operator==(const Dataset&) const = default;
};

// 50 five-letter words; fixed order.
const std::vector<std::string>& builtin_vocabulary();

struct GlyphParams {
  double rot = 0.0;    // degrees
  double scale = 1.0;
  double tx = 0.0;     // pixels
  double ty = 0.0;
  double noise = 0.0;  // additive uniform amplitude
  bool texture = false;
  std::uint64_t noise_seed = 0;
};

// 28x28 rendering of one character: 7x7 procedural bitmap, nearest-neighbour
// upsampled x4, affine-perturbed with bilinear sampling, alpha-composited
// over a blank or textured background, plus clamped additive noise.
// Deterministic in all arguments.
std::vector<float> render_glyph(char ch, const GlyphParams& p);

Dataset generate_split(const DataSpec& spec, int count, std::uint64_t split_seed,
                       ExecMode mode = ExecMode::Serial);

struct GeneratedData {
  Dataset train, val, test;
};
GeneratedData generate_dataset(const DataSpec& spec, ExecMode mode = ExecMode::Serial);

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// Tab-separated description written next to generated splits.
void write_manifest(const std::string& path, const DataSpec& spec,
                    const std::vector<std::string>& vocab);

}  // namespace deepstruct
