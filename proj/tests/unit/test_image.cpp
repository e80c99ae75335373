#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "llab/corpus.hpp"
#include "llab/image.hpp"
#include "llab/imageio.hpp"
#include "llab/synth.hpp"

using namespace llab;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("llab_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageBuffer random_image(Rng& rng, int h, int w) {
  ImageBuffer img(h, w);
  for (double& v : img.px) v = rng.uniform();
  return img;
}
}  // namespace

TEST_CASE("ppm round trip") {
  TempDir tmp;
  const auto path = (tmp.path / "a.ppm").string();

  ImageBuffer ones(5, 7, 1.0);
  save_ppm(ones, path);
  auto back = load_ppm(path);
  REQUIRE(back.h == 5);
  REQUIRE(back.w == 7);
  for (double v : back.px) REQUIRE(v == 1.0);

  Rng rng(1);
  auto img = random_image(rng, 9, 6);
  save_ppm(img, path);
  back = load_ppm(path);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    REQUIRE(std::abs(back.px[i] - img.px[i]) < 1.0 / 255.0);
}

TEST_CASE("ppm rejects unsupported depth") {
  TempDir tmp;
  const auto path = (tmp.path / "wide.ppm").string();
  std::ofstream out(path, std::ios::binary);
  out << "P6\n2 2\n65535\n";
  for (int i = 0; i < 24; ++i) out.put('\0');
  out.close();
  REQUIRE_THROWS_AS(load_ppm(path), DataError);
  REQUIRE_THROWS_AS(load_ppm((tmp.path / "missing.ppm").string()), DataError);
}

TEST_CASE("png round trip and byte determinism") {
  TempDir tmp;
  Rng rng(2);
  auto img = random_image(rng, 12, 8);
  const auto p1 = (tmp.path / "x1.png").string();
  const auto p2 = (tmp.path / "x2.png").string();
  save_png(img, p1);
  save_png(img, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE(b1 == b2);

  auto back = load_png(p1);
  REQUIRE(back.h == 12);
  REQUIRE(back.w == 8);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    REQUIRE(std::abs(back.px[i] - img.px[i]) < 1.0 / 255.0);
}

TEST_CASE("png rejects alpha with a clear error") {
  TempDir tmp;
  const auto path = (tmp.path / "rgba.png").string();
  // hand-build an RGBA IHDR
  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  llab::detail::put_u32be(ihdr, 1);
  llab::detail::put_u32be(ihdr, 1);
  ihdr.push_back(8);
  ihdr.push_back(6);  // color type RGBA
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  llab::detail::png_chunk(out, "IHDR", ihdr);
  llab::detail::png_chunk(out, "IEND", {});
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  f.close();
  REQUIRE_THROWS_WITH(load_png(path), Catch::Matchers::ContainsSubstring("alpha"));
}

TEST_CASE("ingestion: center-crop then bilinear resize") {
  // 64x48 (w x h? buffer is h,w) -> spec case: 64 wide, 48 tall, target 32
  ImageBuffer img(48, 64);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = x < 8 ? 1.0 : 0.0;
  // crop keeps x in [8, 56) -> the white stripe x<8 is cut away entirely
  auto out = fit_to_resolution(img, 32);
  REQUIRE(out.h == 32);
  REQUIRE(out.w == 32);
  for (double v : out.px) REQUIRE(v == 0.0);

  // same-size resize is the identity
  Rng rng(3);
  auto small = random_image(rng, 16, 16);
  auto same = resize_bilinear(small, 16, 16);
  REQUIRE(same.px == small.px);
}

TEST_CASE("swap_rb values and involution") {
  ImageBuffer img(1, 1);
  img.at(0, 0, 0) = 1.0;
  img.at(0, 0, 1) = 0.5;
  img.at(0, 0, 2) = 0.0;
  auto sw = apply_pixel_op(PixelOperator::swap_rb(), img);
  REQUIRE(sw.at(0, 0, 0) == 0.0);
  REQUIRE(sw.at(0, 0, 1) == 0.5);
  REQUIRE(sw.at(0, 0, 2) == 1.0);

  Rng rng(4);
  auto rimg = random_image(rng, 8, 8);
  auto twice = apply_pixel_op(PixelOperator::swap_rb(),
                              apply_pixel_op(PixelOperator::swap_rb(), rimg));
  REQUIRE(twice.px == rimg.px);  // exact involution
}

TEST_CASE("suppress converges to the channel-zeroing projector") {
  Rng rng(5);
  auto img = random_image(rng, 6, 6);
  auto op = PixelOperator::suppress(2, 0.9);
  auto cur = img;
  double prev_blue = 1e9;
  for (int n = 1; n <= 12; ++n) {
    cur = apply_pixel_op(op, cur);
    double blue = 0;
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) blue = std::max(blue, cur.at(y, x, 2));
    REQUIRE(blue <= prev_blue);  // monotone per-pixel decay
    prev_blue = blue;
  }
  const double factor = std::pow(0.9, 12);
  REQUIRE(factor == Catch::Approx(0.282429536481).epsilon(1e-12));
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      REQUIRE(cur.at(y, x, 2) == Catch::Approx(img.at(y, x, 2) * factor).margin(1e-12));
      REQUIRE(cur.at(y, x, 0) == img.at(y, x, 0));
    }
  REQUIRE_THROWS_AS(PixelOperator::suppress(2, 1.0), ConfigError);
  REQUIRE_THROWS_AS(PixelOperator::suppress(3, 0.5), ConfigError);
}

TEST_CASE("grayscale weights and idempotence") {
  ImageBuffer white(1, 1, 1.0);
  auto g = to_grayscale(white);
  for (double v : g.px) REQUIRE(v == Catch::Approx(1.0));

  ImageBuffer red(1, 1);
  red.at(0, 0, 0) = 1.0;
  g = to_grayscale(red);
  for (int c = 0; c < 3; ++c) REQUIRE(g.at(0, 0, c) == Catch::Approx(0.299));

  Rng rng(6);
  auto img = random_image(rng, 5, 5);
  auto g1 = to_grayscale(img);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      REQUIRE(g1.at(y, x, 0) == g1.at(y, x, 1));
      REQUIRE(g1.at(y, x, 1) == g1.at(y, x, 2));
    }
  auto g2 = to_grayscale(g1);
  for (std::size_t i = 0; i < g1.px.size(); ++i)
    REQUIRE(g2.px[i] == Catch::Approx(g1.px[i]).margin(1e-15));
}

TEST_CASE("split_corpus sizes, determinism, disjointness") {
  std::vector<std::string> files;
  for (int i = 0; i < 1000; ++i) files.push_back("f" + std::to_string(i) + ".ppm");

  auto c1 = split_corpus(files, 7, {0.5, 0.3, 0.1, 0.1});
  REQUIRE(c1.split(Split::encoder_pretrain).size() == 500);
  REQUIRE(c1.split(Split::reconstructor_train).size() == 300);
  REQUIRE(c1.split(Split::operator_fit).size() == 100);
  REQUIRE(c1.split(Split::eval).size() == 100);

  auto c2 = split_corpus(files, 7, {0.5, 0.3, 0.1, 0.1});
  for (int i = 0; i < 4; ++i)
    REQUIRE(c1.files[static_cast<std::size_t>(i)] == c2.files[static_cast<std::size_t>(i)]);

  auto c3 = split_corpus(files, 8, {0.5, 0.3, 0.1, 0.1});
  REQUIRE(c3.split(Split::eval) != c1.split(Split::eval));

  validate_disjoint(c1);  // no throw
  Corpus bad = c1;
  bad.split(Split::operator_fit).push_back(bad.split(Split::reconstructor_train).front());
  REQUIRE_THROWS_AS(validate_disjoint(bad), DataError);

  REQUIRE_THROWS_AS(split_corpus({"a", "b"}, 1, {0.25, 0.25, 0.25, 0.25}),
                    DataError);
  REQUIRE_THROWS_AS(split_corpus(files, 1, {0.5, 0.5, 0.5, 0.5}), ConfigError);
}

TEST_CASE("augment determinism and clamping") {
  Rng rng(9);
  auto img = random_image(rng, 16, 16);
  auto a1 = augment(img, 1234);
  auto a2 = augment(img, 1234);
  REQUIRE(a1.px == a2.px);
  auto a3 = augment(img, 1235);
  REQUIRE(a3.px != a1.px);
  for (double v : a1.px) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }

  AugmentParams idp;  // defaults: no flip, scale 1, zero jitter
  auto same = apply_augment(img, idp);
  REQUIRE(same.px == img.px);
}

TEST_CASE("synthetic corpus generation") {
  auto img = synth_image(42, 32);
  REQUIRE(img.h == 32);
  REQUIRE(img.w == 32);
  for (double v : img.px) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  auto again = synth_image(42, 32);
  REQUIRE(again.px == img.px);

  TempDir tmp;
  auto paths = make_corpus((tmp.path / "corpus").string(), 12, 16, 99);
  REQUIRE(paths.size() == 12);
  auto listed = list_images((tmp.path / "corpus").string());
  REQUIRE(listed.size() == 12);
  auto loaded = load_image(listed.front());
  REQUIRE(loaded.h == 16);
}
