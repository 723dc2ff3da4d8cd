#include "deepstruct/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "deepstruct/checksum.hpp"
#include "deepstruct/errors.hpp"
#include "deepstruct/rng.hpp"

namespace deepstruct {

namespace {

// 7x7 bitmaps, one string per row, '#' = ink. Deliberately includes the
// classic confusable clusters (o/c/e, h/n, b/d/p, i/l, u/v) so the unary
// classifier has real errors for the structured model to fix.
const char* kGlyphs[26][7] = {
    // a
    {".......", ".####..", ".....#.", ".#####.", "#....#.", "#...##.", ".###.#."},
    // b
    {"#......", "#......", "#.###..", "##...#.", "#....#.", "##...#.", "#.###.."},
    // c
    {".......", ".####..", "#....#.", "#......", "#......", "#....#.", ".####.."},
    // d
    {".....#.", ".....#.", ".###.#.", "#...##.", "#....#.", "#...##.", ".###.#."},
    // e
    {".......", ".####..", "#....#.", "######.", "#......", "#....#.", ".####.."},
    // f
    {"..###..", ".#.....", "####...", ".#.....", ".#.....", ".#.....", ".#....."},
    // g
    {".###.#.", "#...##.", "#....#.", "#...##.", ".###.#.", ".....#.", ".####.."},
    // h
    {"#......", "#......", "#.###..", "##...#.", "#....#.", "#....#.", "#....#."},
    // i
    {"..#....", ".......", ".##....", "..#....", "..#....", "..#....", ".###..."},
    // j
    {"...#...", ".......", "..##...", "...#...", "...#...", "#..#...", ".##...."},
    // k
    {"#......", "#...#..", "#..#...", "###....", "#..#...", "#...#..", "#....#."},
    // l
    {".##....", "..#....", "..#....", "..#....", "..#....", "..#....", ".###..."},
    // m
    {".......", ".......", "##.#.#.", "#.#.#.#", "#.#.#.#", "#.#.#.#", "#.#.#.#"},
    // n
    {".......", ".......", "#.###..", "##...#.", "#....#.", "#....#.", "#....#."},
    // o
    {".......", ".####..", "#....#.", "#....#.", "#....#.", "#....#.", ".####.."},
    // p
    {".......", "#.###..", "##...#.", "#....#.", "##...#.", "#.###..", "#......"},
    // q
    {".......", ".###.#.", "#...##.", "#....#.", "#...##.", ".###.#.", ".....#."},
    // r
    {".......", ".......", "#.##...", "##..#..", "#......", "#......", "#......"},
    // s
    {".......", ".####..", "#......", ".####..", ".....#.", "#....#.", ".####.."},
    // t
    {"..#....", "..#....", "#####..", "..#....", "..#....", "..#..#.", "...##.."},
    // u
    {".......", ".......", "#....#.", "#....#.", "#....#.", "#...##.", ".###.#."},
    // v
    {".......", ".......", "#....#.", "#....#.", ".#..#..", ".#..#..", "..##..."},
    // w
    {".......", ".......", "#.#.#.#", "#.#.#.#", "#.#.#.#", "#.#.#.#", ".#.#.#."},
    // x
    {".......", ".......", "#....#.", ".#..#..", "..##...", ".#..#..", "#....#."},
    // y
    {".......", "#....#.", "#....#.", "#...##.", ".###.#.", ".....#.", ".####.."},
    // z
    {".......", "######.", "....#..", "...#...", "..#....", ".#.....", "######."},
};

constexpr int kGlyphGrid = 7;
constexpr int kUpsample = 4;
constexpr int kSide = kGlyphGrid * kUpsample;  // 28
constexpr double kCenter = (kSide - 1) / 2.0;  // 13.5
constexpr int kBgGrid = 7;
constexpr double kBgAmplitude = 0.75;
constexpr double kInkMin = 0.6;   // textured renders attenuate the ink so
constexpr double kInkMax = 1.0;  // strokes and bright background patches overlap

double base_pixel(int letter, int r, int c) {
  if (r < 0 || r >= kSide || c < 0 || c >= kSide) return 0.0;
  return kGlyphs[letter][r / kUpsample][c / kUpsample] == '#' ? 1.0 : 0.0;
}

double bilinear_base(int letter, double y, double x) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0;
  double fy = y - y0;
  double v00 = base_pixel(letter, y0, x0);
  double v01 = base_pixel(letter, y0, x0 + 1);
  double v10 = base_pixel(letter, y0 + 1, x0);
  double v11 = base_pixel(letter, y0 + 1, x0 + 1);
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

}  // namespace

const std::vector<std::string>& builtin_vocabulary() {
  static const std::vector<std::string> words = {
      "apple", "brave", "crane", "dwell", "eagle", "flame", "grape", "house",
      "ivory", "joker", "knife", "lemon", "mango", "night", "ocean", "piano",
      "queen", "river", "stone", "tiger", "urban", "vivid", "wheat", "xenon",
      "yacht", "zebra", "blink", "chess", "draft", "elbow", "frost", "globe",
      "haste", "index", "jolly", "karma", "lunar", "metal", "noble", "orbit",
      "pearl", "quilt", "robin", "salsa", "tulip", "vapor", "whale", "amber",
      "blaze", "cedar"};
  return words;
}

std::vector<float> render_glyph(char ch, const GlyphParams& p) {
  if (ch < 'a' || ch > 'z')
    throw ValidationError(std::string("cannot render character '") + ch + "'");
  int letter = ch - 'a';

  // normalize degrees first so 360 is the same code path as 0, bit for bit
  double deg = std::fmod(p.rot, 360.0);
  double theta = deg * 3.14159265358979323846 / 180.0;
  double ct = std::cos(theta), st = std::sin(theta);
  bool identity = deg == 0.0 && p.scale == 1.0 && p.tx == 0.0 && p.ty == 0.0;

  Rng rng(p.noise_seed);
  double bg_grid[kBgGrid][kBgGrid] = {};
  double ink = 1.0;
  if (p.texture) {
    for (int r = 0; r < kBgGrid; ++r)
      for (int c = 0; c < kBgGrid; ++c) bg_grid[r][c] = rng.uniform(0.0, kBgAmplitude);
    ink = rng.uniform(kInkMin, kInkMax);
  }

  std::vector<float> out(kSide * kSide);
  for (int r = 0; r < kSide; ++r) {
    for (int c = 0; c < kSide; ++c) {
      double g;
      if (identity) {
        g = base_pixel(letter, r, c);
      } else {
        double dx = c - kCenter - p.tx;
        double dy = r - kCenter - p.ty;
        double sx = (ct * dx + st * dy) / p.scale + kCenter;
        double sy = (-st * dx + ct * dy) / p.scale + kCenter;
        g = bilinear_base(letter, sy, sx);
      }
      double bg = 0.0;
      if (p.texture) {
        double u = c * static_cast<double>(kBgGrid - 1) / (kSide - 1);
        double v = r * static_cast<double>(kBgGrid - 1) / (kSide - 1);
        int u0 = static_cast<int>(u), v0 = static_cast<int>(v);
        int u1 = u0 + 1 < kBgGrid ? u0 + 1 : u0;
        int v1 = v0 + 1 < kBgGrid ? v0 + 1 : v0;
        double fu = u - u0, fv = v - v0;
        bg = (1 - fv) * ((1 - fu) * bg_grid[v0][u0] + fu * bg_grid[v0][u1]) +
             fv * ((1 - fu) * bg_grid[v1][u0] + fu * bg_grid[v1][u1]);
      }
      double val = bg * (1.0 - g) + g * ink;
      if (p.noise > 0.0) val += rng.uniform(-p.noise, p.noise);
      if (val < 0.0) val = 0.0;
      if (val > 1.0) val = 1.0;
      out[r * kSide + c] = static_cast<float>(val);
    }
  }
  return out;
}

Dataset generate_split(const DataSpec& spec, int count, std::uint64_t split_seed,
                       ExecMode mode) {
  const std::vector<std::string>& vocab =
      spec.words.empty() ? builtin_vocabulary() : spec.words;
  if (vocab.empty()) throw ValidationError("vocabulary is empty");
  int L = static_cast<int>(vocab.front().size());

  Dataset ds;
  ds.word_length = L;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.samples.resize(count);

  int pixels = ds.slot_pixels();
  if (pixels != 28 * 28)
    throw ValidationError("glyph rendering requires 28x28 slots");
  for_chunks(count, 16, mode, [&](int, int b, int e) {
    for (int i = b; i < e; ++i) {
      std::uint64_t sseed = Rng::derive(split_seed, i);
      Rng rng(sseed);
      const std::string& word = vocab[rng.uniform_int(static_cast<int>(vocab.size()))];
      Dataset::Sample& s = ds.samples[i];
      s.labels.resize(L);
      s.image.resize(static_cast<std::size_t>(L) * pixels);
      for (int c = 0; c < L; ++c) {
        s.labels[c] = static_cast<unsigned char>(word[c] - 'a');
        Rng crng(Rng::derive(sseed, 1 + c));
        GlyphParams p;
        p.rot = crng.uniform(-spec.rotation, spec.rotation);
        p.scale = crng.uniform(spec.scale_min, spec.scale_max);
        p.tx = crng.uniform(-spec.translation, spec.translation);
        p.ty = crng.uniform(-spec.translation, spec.translation);
        p.noise = spec.noise;
        p.texture = spec.background == DataSpec::Background::Texture;
        p.noise_seed = Rng::derive(sseed, 1000 + c);
        std::vector<float> img = render_glyph(word[c], p);
        std::copy(img.begin(), img.end(), s.image.begin() + static_cast<std::size_t>(c) * pixels);
      }
    }
  });
  return ds;
}

GeneratedData generate_dataset(const DataSpec& spec, ExecMode mode) {
  GeneratedData out;
  out.train = generate_split(spec, spec.train_samples, Rng::derive(spec.seed, 11), mode);
  out.val = generate_split(spec, spec.val_samples, Rng::derive(spec.seed, 22), mode);
  out.test = generate_split(spec, spec.test_samples, Rng::derive(spec.seed, 33), mode);
  return out;
}

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  buf.push_back(v & 0xFF);
  buf.push_back((v >> 8) & 0xFF);
  buf.push_back((v >> 16) & 0xFF);
  buf.push_back((v >> 24) & 0xFF);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr char kMagic[8] = {'D', 'S', 'T', 'R', 'U', 'C', 'T', '1'};

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(ds.samples.size()));
  put_u32(buf, static_cast<std::uint32_t>(ds.word_length));
  put_u32(buf, static_cast<std::uint32_t>(ds.height));
  put_u32(buf, static_cast<std::uint32_t>(ds.width));
  for (const auto& s : ds.samples) {
    buf.insert(buf.end(), s.labels.begin(), s.labels.end());
    std::size_t off = buf.size();
    buf.resize(off + s.image.size() * 4);
    std::memcpy(buf.data() + off, s.image.data(), s.image.size() * 4);
  }
  put_u32(buf, crc32(buf.data(), buf.size()));

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::size_t n = std::fwrite(buf.data(), 1, buf.size(), f);
  bool ok = n == buf.size() && std::fclose(f) == 0;
  if (!ok) throw IoError("short write to '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> buf(size > 0 ? size : 0);
  std::size_t n = std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (n != buf.size()) throw IoError("short read from '" + path + "'");

  if (buf.size() < 28 + 4) throw ValidationError("truncated dataset file '" + path + "'");
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw ValidationError("bad magic in dataset file '" + path + "'");
  std::uint32_t version = get_u32(buf.data() + 8);
  if (version != 1)
    throw ValidationError("unsupported dataset version " + std::to_string(version));
  std::uint32_t count = get_u32(buf.data() + 12);
  std::uint32_t L = get_u32(buf.data() + 16);
  std::uint32_t H = get_u32(buf.data() + 20);
  std::uint32_t W = get_u32(buf.data() + 24);

  std::uint32_t stored = get_u32(buf.data() + buf.size() - 4);
  std::uint32_t actual = crc32(buf.data(), buf.size() - 4);
  if (stored != actual)
    throw ValidationError("checksum mismatch in dataset file '" + path + "'");

  std::size_t per_sample = L + static_cast<std::size_t>(L) * H * W * 4;
  std::size_t expect = 28 + per_sample * count + 4;
  if (buf.size() != expect)
    throw ValidationError("truncated dataset file '" + path + "'");

  Dataset ds;
  ds.word_length = static_cast<int>(L);
  ds.height = static_cast<int>(H);
  ds.width = static_cast<int>(W);
  ds.samples.resize(count);
  const unsigned char* p = buf.data() + 28;
  for (auto& s : ds.samples) {
    s.labels.assign(p, p + L);
    p += L;
    for (unsigned char lab : s.labels)
      if (lab >= 26) throw ValidationError("label out of range in '" + path + "'");
    s.image.resize(static_cast<std::size_t>(L) * H * W);
    std::memcpy(s.image.data(), p, s.image.size() * 4);
    p += s.image.size() * 4;
  }
  return ds;
}

void write_manifest(const std::string& path, const DataSpec& spec,
                    const std::vector<std::string>& vocab) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f, "train_samples\t%d\n", spec.train_samples);
  std::fprintf(f, "val_samples\t%d\n", spec.val_samples);
  std::fprintf(f, "test_samples\t%d\n", spec.test_samples);
  std::fprintf(f, "word_length\t%d\n", static_cast<int>(vocab.front().size()));
  std::fprintf(f, "height\t%d\n", spec.height);
  std::fprintf(f, "width\t%d\n", spec.width);
  std::fprintf(f, "rotation\t%g\n", spec.rotation);
  std::fprintf(f, "scale_min\t%g\n", spec.scale_min);
  std::fprintf(f, "scale_max\t%g\n", spec.scale_max);
  std::fprintf(f, "translation\t%g\n", spec.translation);
  std::fprintf(f, "noise\t%g\n", spec.noise);
  std::fprintf(f, "background\t%s\n",
               spec.background == DataSpec::Background::Blank ? "blank" : "texture");
  std::fprintf(f, "seed\t%llu\n", static_cast<unsigned long long>(spec.seed));
  std::fprintf(f, "vocabulary");
  for (const auto& w : vocab) std::fprintf(f, "\t%s", w.c_str());
  std::fprintf(f, "\n");
  if (std::fclose(f) != 0) throw IoError("short write to '" + path + "'");
}

}  // namespace deepstruct
