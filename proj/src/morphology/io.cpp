#include "morphctl/morphology/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "morphctl/numerics/rng.hpp"

namespace morphctl {

using nlohmann::json;

namespace {

constexpr const char* kMorphologyFormat = "morphctl.morphology";
constexpr const char* kManifestFormat = "morphctl.manifest";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MorphologyError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MorphologyError("cannot write '" + path.string() + "'");
  out << text;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "line L, column C" in the message.
    throw MorphologyError(what + ": " + e.what());
  }
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw MorphologyError("field " + path + "." + key + ": missing");
  }
  return obj.at(key);
}

double number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number()) throw MorphologyError("field " + path + "." + key + ": expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw MorphologyError("field " + path + ": expected an integer");
  return v.get<int>();
}

std::uint64_t parse_hex(const json& v, const std::string& path) {
  if (!v.is_string()) throw MorphologyError("field " + path + ": expected a hex string");
  try {
    return std::stoull(v.get<std::string>(), nullptr, 16);
  } catch (const std::exception&) {
    throw MorphologyError("field " + path + ": malformed hex value");
  }
}

json normalizer_json(const ContextNormalizer& n) {
  json features = json::array();
  for (auto f : kContextFeatures) features.push_back(std::string(f));
  return {{"features", features},
          {"mean", std::vector<double>(n.mean.begin(), n.mean.end())},
          {"std", std::vector<double>(n.std.begin(), n.std.end())}};
}

ContextNormalizer normalizer_from_json(const json& j) {
  ContextNormalizer n;
  auto mean = field(j, "mean", "normalizer").get<std::vector<double>>();
  auto sd = field(j, "std", "normalizer").get<std::vector<double>>();
  if (mean.size() != kContextDim || sd.size() != kContextDim) {
    throw MorphologyError("field normalizer: expected " + std::to_string(kContextDim) +
                          " features");
  }
  std::copy(mean.begin(), mean.end(), n.mean.begin());
  std::copy(sd.begin(), sd.end(), n.std.begin());
  return n;
}

std::uint64_t manifest_hash(const CorpusManifest& m, const std::vector<MorphologyTree>& train,
                            const std::vector<MorphologyTree>& test) {
  std::string acc = "seed:" + std::to_string(m.seed);
  for (std::size_t i = 0; i < train.size(); ++i) {
    acc += "|train:" + m.train[i].id + ":" + hex64(content_hash(train[i]));
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    acc += "|test:" + m.test[i].id + ":" + hex64(content_hash(test[i]));
  }
  acc += "|" + normalizer_json(m.normalizer).dump();
  return fnv1a(acc);
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string morphology_to_text(const MorphologyTree& tree) {
  json limbs = json::array();
  for (const auto& l : tree.limbs) {
    limbs.push_back({{"length", l.length},
                     {"mass", l.mass},
                     {"attach_offset", l.attach_offset},
                     {"rest_angle", l.rest_angle},
                     {"joint_limit_lo", l.joint_limit_lo},
                     {"joint_limit_hi", l.joint_limit_hi},
                     {"gear", l.gear},
                     {"depth", l.depth}});
  }
  json doc = {{"format", kMorphologyFormat}, {"version", 1},           {"id", tree.id},
              {"limbs", limbs},              {"parent", tree.parent}, {"child_order", tree.child_order}};
  return doc.dump(2) + "\n";
}

MorphologyTree morphology_from_text(const std::string& text) {
  const json doc = parse_json(text, "morphology parse error");
  if (!doc.is_object()) throw MorphologyError("morphology document must be a JSON object");
  if (doc.value("format", "") != kMorphologyFormat) {
    throw MorphologyError("field format: expected '" + std::string(kMorphologyFormat) + "'");
  }
  if (doc.value("version", 0) != 1) throw MorphologyError("field version: unsupported version");

  MorphologyTree tree;
  const json& id = field(doc, "id", "morphology");
  if (!id.is_string()) throw MorphologyError("field morphology.id: expected a string");
  tree.id = id.get<std::string>();

  const json& limbs = field(doc, "limbs", "morphology");
  if (!limbs.is_array()) throw MorphologyError("field morphology.limbs: expected an array");
  for (std::size_t i = 0; i < limbs.size(); ++i) {
    const std::string path = "limbs[" + std::to_string(i) + "]";
    const json& l = limbs[i];
    LimbContext c;
    c.length = number(l, "length", path);
    c.mass = number(l, "mass", path);
    c.attach_offset = number(l, "attach_offset", path);
    c.rest_angle = number(l, "rest_angle", path);
    c.joint_limit_lo = number(l, "joint_limit_lo", path);
    c.joint_limit_hi = number(l, "joint_limit_hi", path);
    c.gear = number(l, "gear", path);
    c.depth = integer(field(l, "depth", path), path + ".depth");
    tree.limbs.push_back(c);
  }
  const json& parent = field(doc, "parent", "morphology");
  if (!parent.is_array()) throw MorphologyError("field morphology.parent: expected an array");
  for (std::size_t i = 0; i < parent.size(); ++i) {
    tree.parent.push_back(integer(parent[i], "parent[" + std::to_string(i) + "]"));
  }
  const json& order = field(doc, "child_order", "morphology");
  if (!order.is_array()) throw MorphologyError("field morphology.child_order: expected an array");
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::string path = "child_order[" + std::to_string(i) + "]";
    if (!order[i].is_array()) throw MorphologyError("field " + path + ": expected an array");
    std::vector<int> kids;
    for (std::size_t k = 0; k < order[i].size(); ++k) {
      kids.push_back(integer(order[i][k], path + "[" + std::to_string(k) + "]"));
    }
    tree.child_order.push_back(std::move(kids));
  }
  validate(tree);
  return tree;
}

void save_morphology(const std::filesystem::path& path, const MorphologyTree& tree) {
  validate(tree);
  write_file(path, morphology_to_text(tree));
}

MorphologyTree load_morphology(const std::filesystem::path& path) {
  try {
    return morphology_from_text(read_file(path));
  } catch (const MorphologyError& e) {
    throw MorphologyError(path.string() + ": " + e.what());
  }
}

void save_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  auto entries = [](const std::vector<ManifestEntry>& es) {
    json arr = json::array();
    for (const auto& e : es) {
      arr.push_back({{"id", e.id}, {"file", e.file}, {"topology_hash", hex64(e.topology_hash)}});
    }
    return arr;
  };
  json doc = {{"format", kManifestFormat},
              {"version", 1},
              {"seed", m.seed},
              {"train", entries(m.train)},
              {"test", entries(m.test)},
              {"normalizer", normalizer_json(m.normalizer)},
              {"hash", hex64(m.hash)}};
  write_file(path, doc.dump(2) + "\n");
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  const json doc = parse_json(read_file(path), path.string());
  if (doc.value("format", "") != kManifestFormat) {
    throw MorphologyError(path.string() + ": not a corpus manifest");
  }
  CorpusManifest m;
  m.seed = field(doc, "seed", "manifest").get<std::uint64_t>();
  auto entries = [&](const char* key) {
    std::vector<ManifestEntry> out;
    const json& arr = field(doc, key, "manifest");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = std::string(key) + "[" + std::to_string(i) + "]";
      ManifestEntry e;
      e.id = field(arr[i], "id", p).get<std::string>();
      e.file = field(arr[i], "file", p).get<std::string>();
      e.topology_hash = parse_hex(field(arr[i], "topology_hash", p), p + ".topology_hash");
      out.push_back(std::move(e));
    }
    return out;
  };
  m.train = entries("train");
  m.test = entries("test");
  m.normalizer = normalizer_from_json(field(doc, "normalizer", "manifest"));
  m.hash = parse_hex(field(doc, "hash", "manifest"), "manifest.hash");
  return m;
}

Corpus generate_corpus(const CorpusOptions& options) {
  Corpus corpus;
  corpus.manifest.seed = options.seed;
  std::set<std::uint64_t> train_topologies, test_topologies;
  std::uint64_t stream = 0;
  const std::size_t max_attempts = 1000 * (options.train_count + options.test_count + 1);
  auto next_tree = [&] {
    if (stream >= max_attempts) {
      throw MorphologyError("could not sample enough distinct topologies; widen the limb range");
    }
    return sample_morphology(Rng::mix(options.seed, stream++), options.min_limbs,
                             options.max_limbs, options.rules);
  };
  while (corpus.train.size() < options.train_count) {
    MorphologyTree t = next_tree();
    if (!train_topologies.insert(topology_hash(t)).second) continue;
    char id[32];
    std::snprintf(id, sizeof(id), "train-%02zu", corpus.train.size());
    t.id = id;
    corpus.train.push_back(std::move(t));
  }
  while (corpus.test.size() < options.test_count) {
    MorphologyTree t = next_tree();
    const std::uint64_t h = topology_hash(t);
    if (train_topologies.contains(h) || !test_topologies.insert(h).second) continue;
    char id[32];
    std::snprintf(id, sizeof(id), "test-%02zu", corpus.test.size());
    t.id = id;
    corpus.test.push_back(std::move(t));
  }
  corpus.manifest.normalizer = ContextNormalizer::fit(corpus.train);
  for (const auto& t : corpus.train) {
    corpus.manifest.train.push_back({t.id, "train/" + t.id + ".json", topology_hash(t)});
  }
  for (const auto& t : corpus.test) {
    corpus.manifest.test.push_back({t.id, "test/" + t.id + ".json", topology_hash(t)});
  }
  corpus.manifest.hash = manifest_hash(corpus.manifest, corpus.train, corpus.test);
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, Corpus& corpus) {
  corpus.manifest.hash = manifest_hash(corpus.manifest, corpus.train, corpus.test);
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    save_morphology(dir / corpus.manifest.train[i].file, corpus.train[i]);
  }
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    save_morphology(dir / corpus.manifest.test[i].file, corpus.test[i]);
  }
  save_manifest(dir / "manifest.json", corpus.manifest);
}

Corpus read_corpus(const std::filesystem::path& manifest_path) {
  Corpus corpus;
  corpus.manifest = load_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  auto load_split = [&](const std::vector<ManifestEntry>& entries) {
    std::vector<MorphologyTree> trees;
    for (const auto& e : entries) {
      MorphologyTree t = load_morphology(dir / e.file);
      if (t.id != e.id) throw MorphologyError(e.file + ": id does not match manifest");
      if (topology_hash(t) != e.topology_hash) {
        throw MorphologyError(e.file + ": topology hash does not match manifest");
      }
      trees.push_back(std::move(t));
    }
    return trees;
  };
  corpus.train = load_split(corpus.manifest.train);
  corpus.test = load_split(corpus.manifest.test);
  if (manifest_hash(corpus.manifest, corpus.train, corpus.test) != corpus.manifest.hash) {
    throw MorphologyError(manifest_path.string() + ": corpus content does not match manifest hash");
  }
  return corpus;
}

}  // namespace morphctl
