#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

/// Disjoint corpus roles. The pipeline's conditional-independence contract
/// (reconstructor never sees operator-fit data and vice versa) is enforced
/// by routing every stage through its fixed role.
enum class Split { encoder_pretrain, reconstructor_train, operator_fit, eval };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::encoder_pretrain: return "encoder-pretrain";
    case Split::reconstructor_train: return "reconstructor-train";
    case Split::operator_fit: return "operator-fit";
    case Split::eval: return "eval";
  }
  return "?";
}

struct Corpus {
  std::uint64_t seed = 0;
  std::array<std::vector<std::string>, 4> files;

  const std::vector<std::string>& split(Split s) const {
    return files[static_cast<std::size_t>(s)];
  }
  std::vector<std::string>& split(Split s) {
    return files[static_cast<std::size_t>(s)];
  }
};

/// Handle to one split of one corpus; carries provenance for operations
/// that must only consume a particular role.
struct SplitRef {
  const Corpus* corpus = nullptr;
  Split role = Split::eval;

  const std::vector<std::string>& files() const { return corpus->split(role); }
  const char* name() const { return split_name(role); }

  void require(Split expected) const {
    if (role != expected)
      throw DataError(std::string("split discipline violation: operation "
                                  "requires the '") +
                      split_name(expected) + "' split but was given '" +
                      split_name(role) + "'");
  }
};

inline void validate_disjoint(const Corpus& corpus) {
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      std::vector<std::string> sa = corpus.files[a], sb = corpus.files[b];
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      std::vector<std::string> inter;
      std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                            std::back_inserter(inter));
      if (!inter.empty())
        throw DataError(std::string("corpus splits overlap: '") +
                        split_name(static_cast<Split>(a)) + "' and '" +
                        split_name(static_cast<Split>(b)) + "' share " +
                        inter.front());
    }
}

/// Deterministic disjoint split. Files are ranked by a seeded hash of their
/// name (stable under list permutation) and sliced into exact counts derived
/// from the fractions by largest remainder.
inline Corpus split_corpus(std::vector<std::string> files, std::uint64_t seed,
                           std::array<double, 4> fractions) {
  if (files.empty()) throw DataError("split_corpus: empty file list");
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split_corpus: negative fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split_corpus: fractions must sum to 1");

  const std::size_t n = files.size();
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> rema{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(exact);
    rema[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i)
      if (rema[i] > rema[best]) best = i;
    counts[best] += 1;
    rema[best] = -1.0;
    ++assigned;
  }
  for (std::size_t i = 0; i < 4; ++i)
    if (fractions[i] > 0.0 && counts[i] == 0)
      throw DataError(std::string("split_corpus: too few files for the '") +
                      split_name(static_cast<Split>(i)) + "' fraction");

  auto name_of = [](const std::string& path) {
    return std::filesystem::path(path).filename().string();
  };
  std::sort(files.begin(), files.end(),
            [&](const std::string& a, const std::string& b) {
              const auto ha = mix_seed(seed, name_of(a));
              const auto hb = mix_seed(seed, name_of(b));
              if (ha != hb) return ha < hb;
              return a < b;
            });

  Corpus corpus;
  corpus.seed = seed;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    corpus.files[i].assign(files.begin() + static_cast<std::ptrdiff_t>(pos),
                           files.begin() + static_cast<std::ptrdiff_t>(pos + counts[i]));
    pos += counts[i];
  }
  validate_disjoint(corpus);
  return corpus;
}

/// Sorted list of .ppm/.png files under a directory.
inline std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw DataError("corpus root is not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".ppm" || ext == ".png") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace llab
