#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "morphctl/morphology/morphology.hpp"

namespace morphctl {

// Morphology documents are JSON text:
//   {"format": "morphctl.morphology", "version": 1, "id": ...,
//    "limbs": [{"length": ..., "mass": ..., ...}, ...],
//    "parent": [-1, 0, ...], "child_order": [[1, 2], [], ...]}
std::string morphology_to_text(const MorphologyTree& tree);
// Throws MorphologyError with the line (syntax errors) or field path.
MorphologyTree morphology_from_text(const std::string& text);

void save_morphology(const std::filesystem::path& path, const MorphologyTree& tree);
MorphologyTree load_morphology(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string file;  // relative to the manifest directory
  std::uint64_t topology_hash = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  ContextNormalizer normalizer = ContextNormalizer::identity();

  // Hash of the split membership and every referenced tree's content.
  std::uint64_t hash = 0;
};

void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest load_manifest(const std::filesystem::path& path);

struct Corpus {
  CorpusManifest manifest;
  std::vector<MorphologyTree> train;
  std::vector<MorphologyTree> test;
};

struct CorpusOptions {
  std::uint64_t seed = 1;
  std::size_t train_count = 20;
  std::size_t test_count = 20;
  std::size_t min_limbs = 3;
  std::size_t max_limbs = 8;
  GenerationRules rules;
};

// Samples train trees with distinct topologies, then test trees whose
// topologies occur nowhere in the train split (nor twice in the test split).
Corpus generate_corpus(const CorpusOptions& options);
// Writes train/ and test/ morphology files plus manifest.json into dir.
void write_corpus(const std::filesystem::path& dir, Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& manifest_path);

// FNV-1a over bytes; used for every persisted hash.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace morphctl
