#include "sokd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sokd/io.hpp"

namespace sokd {

using json = nlohmann::json;

namespace {

constexpr double kSimplexTol = 1e-12;

void check_simplex(const std::vector<double>& p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    if (v < 0) throw std::invalid_argument(what + ": negative entry");
    s += v;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw std::invalid_argument(what + ": entries do not sum to 1");
}

double gauss(Rng& rng) {
  // Box-Muller
  double u1 = rng.uniform();
  double u2 = rng.uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Marsaglia-Tsang gamma sampler, shape alpha > 0, scale 1.
double gamma_sample(Rng& rng, double alpha) {
  if (alpha < 1.0) {
    double u = rng.uniform();
    if (u < 1e-300) u = 1e-300;
    return gamma_sample(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = gauss(rng);
    double v = 1.0 + c * x;
    if (v <= 0) continue;
    v = v * v * v;
    double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u < 1e-300) u = 1e-300;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

}  // namespace

void FeatureVocabulary::validate() const {
  if (features.empty()) throw std::invalid_argument("vocabulary: no features");
  if (sampling_weights.size() != features.size())
    throw std::invalid_argument("vocabulary: sampling_weights size mismatch");
  double s = 0.0;
  for (double w : sampling_weights) {
    if (w < 0) throw std::invalid_argument("vocabulary: negative sampling weight");
    s += w;
  }
  if (std::fabs(s - 1.0) > 1e-9)
    throw std::invalid_argument("vocabulary: sampling_weights do not sum to 1");
  for (const FeatureSpec& f : features) {
    if (f.label_distribution.size() != K)
      throw std::invalid_argument("vocabulary: label_distribution length != K");
    check_simplex(f.label_distribution, "feature " + f.name);
    if (f.representation_mean.size() != b)
      throw std::invalid_argument("vocabulary: representation_mean length != b");
    if (f.representation_scale < 0)
      throw std::invalid_argument("vocabulary: negative representation_scale");
  }
}

void PatchTransform::apply(const double* in, double* out, std::size_t b) const {
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t src = permutation.empty() ? i : permutation[i];
    out[i] = scale * in[src] + (shift.empty() ? 0.0 : shift[i]);
  }
}

TransformSet TransformSet::identity(std::size_t b) {
  TransformSet t;
  PatchTransform id;
  id.shift.assign(b, 0.0);
  id.permutation.resize(b);
  std::iota(id.permutation.begin(), id.permutation.end(), std::size_t{0});
  t.transforms.push_back(std::move(id));
  t.magnitude_bound = 0.0;
  return t;
}

bool TransformSet::is_identity_only() const { return magnitude_bound == 0.0; }

std::vector<std::size_t> MixedFeatureDataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split_tags.size(); ++i)
    if (split_tags[i] == s) out.push_back(i);
  return out;
}

void MixedFeatureDataset::assign_splits_modular() {
  split_tags.resize(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    switch (i % 10) {
      case 8: split_tags[i] = Split::holdout; break;
      case 9: split_tags[i] = Split::temp_holdout; break;
      default: split_tags[i] = Split::train;
    }
  }
}

void MixedFeatureDataset::assign_splits_fractions(double train, double holdout,
                                                  double temp_holdout) {
  std::size_t n = examples.size();
  std::size_t n_train = static_cast<std::size_t>(train * n);
  std::size_t n_hold = static_cast<std::size_t>(holdout * n);
  std::size_t n_temp = static_cast<std::size_t>(temp_holdout * n);
  if (n_train + n_hold + n_temp > n)
    throw std::invalid_argument("split fractions exceed dataset size");
  split_tags.assign(n, Split::test);
  for (std::size_t i = 0; i < n_train; ++i) split_tags[i] = Split::train;
  for (std::size_t i = n_train; i < n_train + n_hold; ++i) split_tags[i] = Split::holdout;
  for (std::size_t i = n_train + n_hold; i < n_train + n_hold + n_temp; ++i)
    split_tags[i] = Split::temp_holdout;
}

std::vector<double> true_label_distribution(const FeatureVocabulary& vocab,
                                            const std::vector<std::size_t>& feature_names) {
  if (feature_names.empty()) throw std::invalid_argument("true_label_distribution: empty list");
  const std::size_t K = vocab.K;
  const double inv_m = 1.0 / static_cast<double>(feature_names.size());
  // log-space geometric mean; a zero in any factor zeroes the class
  std::vector<double> logp(K, 0.0);
  std::vector<bool> zeroed(K, false);
  for (std::size_t z : feature_names) {
    const auto& p = vocab.features.at(z).label_distribution;
    for (std::size_t k = 0; k < K; ++k) {
      if (p[k] <= 0.0)
        zeroed[k] = true;
      else
        logp[k] += std::log(p[k]);
    }
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k)
    if (!zeroed[k]) mx = std::max(mx, logp[k] * inv_m);
  if (!std::isfinite(mx)) throw std::runtime_error("degenerate geometric mean");
  std::vector<double> out(K, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (zeroed[k]) continue;
    out[k] = std::exp(logp[k] * inv_m - mx);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

MixedFeatureDataset sample_dataset(const FeatureVocabulary& vocab, std::size_t N, std::size_t M,
                                   const TransformSet& transforms, std::uint64_t seed) {
  vocab.validate();
  if (M < 1) throw std::invalid_argument("sample_dataset: M must be >= 1");
  if (transforms.transforms.empty())
    throw std::invalid_argument("sample_dataset: transform set empty");

  MixedFeatureDataset ds;
  ds.M = M;
  ds.b = vocab.b;
  ds.K = vocab.K;
  ds.vocabulary = vocab;
  ds.has_vocabulary = true;
  ds.transforms = transforms;
  ds.seed = seed;
  ds.examples.reserve(N);

  Rng rng(substream_seed(seed, "data"));
  const std::size_t Z = vocab.size();
  std::vector<double> pair_weights(Z);

  for (std::size_t i = 0; i < N; ++i) {
    MixedFeatureExample ex;
    ex.feature_names.resize(M);
    ex.feature_names[0] = rng.categorical(vocab.sampling_weights);
    for (std::size_t m = 1; m < M; ++m) {
      if (vocab.pmi_bandwidth) {
        // co-occurrence weight decreasing in label-distribution divergence
        const auto& p0 = vocab.features[ex.feature_names[0]].label_distribution;
        for (std::size_t z = 0; z < Z; ++z)
          pair_weights[z] =
              vocab.sampling_weights[z] *
              std::exp(-l1_distance(p0, vocab.features[z].label_distribution) /
                       *vocab.pmi_bandwidth);
        ex.feature_names[m] = rng.categorical(pair_weights);
      } else {
        ex.feature_names[m] = rng.categorical(vocab.sampling_weights);
      }
    }

    const std::size_t b = vocab.b;
    ex.base_patches.resize(M * b);
    ex.patches.resize(M * b);
    for (std::size_t m = 0; m < M; ++m) {
      const FeatureSpec& f = vocab.features[ex.feature_names[m]];
      for (std::size_t j = 0; j < b; ++j)
        ex.base_patches[m * b + j] =
            f.representation_mean[j] + f.representation_scale * rng.uniform(-1.0, 1.0);
      std::size_t t = rng.uniform_index(transforms.transforms.size());
      transforms.transforms[t].apply(ex.base_patches.data() + m * b, ex.patches.data() + m * b,
                                     b);
    }

    ex.true_distribution = true_label_distribution(vocab, ex.feature_names);
    ex.label = rng.categorical(ex.true_distribution);
    ds.examples.push_back(std::move(ex));
  }
  ds.split_tags.assign(N, Split::train);
  return ds;
}

CooccurrenceStats feature_cooccurrence_stats(const MixedFeatureDataset& dataset) {
  if (!dataset.has_vocabulary)
    throw std::runtime_error("feature_cooccurrence_stats: ground-truth feature names absent");
  const std::size_t Z = dataset.vocabulary.size();
  CooccurrenceStats stats;
  stats.feature_counts.assign(Z, 0);
  stats.pair_counts.assign(Z, std::vector<std::size_t>(Z, 0));
  std::vector<std::size_t> present;
  for (const auto& ex : dataset.examples) {
    present = ex.feature_names;
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (std::size_t a : present) {
      ++stats.feature_counts[a];
      for (std::size_t b2 : present)
        if (b2 != a) ++stats.pair_counts[a][b2];
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// External ingestion

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& what, std::size_t offset) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw std::runtime_error("IDX parse error: truncated " + what + " at byte offset " +
                             std::to_string(offset));
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

MixedFeatureDataset load_idx(const std::filesystem::path& images,
                             const std::filesystem::path& labels) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open IDX image file: " + images.string());
  std::ifstream lab(labels, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open IDX label file: " + labels.string());

  std::uint32_t img_magic = read_be_u32(img, "image magic", 0);
  if (img_magic != 0x00000803)
    throw std::runtime_error("IDX parse error: bad image magic 0x" +
                             [&] { std::ostringstream o; o << std::hex << img_magic; return o.str(); }() +
                             " at byte offset 0 (expected 0x00000803)");
  std::uint32_t n_img = read_be_u32(img, "image count", 4);
  std::uint32_t rows = read_be_u32(img, "row count", 8);
  std::uint32_t cols = read_be_u32(img, "column count", 12);

  std::uint32_t lab_magic = read_be_u32(lab, "label magic", 0);
  if (lab_magic != 0x00000801)
    throw std::runtime_error("IDX parse error: bad label magic at byte offset 0 (expected 0x00000801)");
  std::uint32_t n_lab = read_be_u32(lab, "label count", 4);
  if (n_img != n_lab)
    throw std::runtime_error("IDX parse error: image count " + std::to_string(n_img) +
                             " != label count " + std::to_string(n_lab));

  const std::size_t b = std::size_t(rows) * cols;
  std::vector<unsigned char> pixels(std::size_t(n_img) * b);
  img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(img.gcount()) != pixels.size())
    throw std::runtime_error("IDX parse error: expected " + std::to_string(pixels.size()) +
                             " payload bytes, got " + std::to_string(img.gcount()));
  std::vector<unsigned char> raw_labels(n_lab);
  lab.read(reinterpret_cast<char*>(raw_labels.data()), n_lab);
  if (static_cast<std::size_t>(lab.gcount()) != raw_labels.size())
    throw std::runtime_error("IDX parse error: expected " + std::to_string(raw_labels.size()) +
                             " label bytes, got " + std::to_string(lab.gcount()));

  MixedFeatureDataset ds;
  ds.M = 1;
  ds.b = b;
  ds.K = raw_labels.empty() ? 0 : (*std::max_element(raw_labels.begin(), raw_labels.end()) + 1);
  ds.transforms = TransformSet::identity(b);
  ds.examples.resize(n_img);
  for (std::size_t i = 0; i < n_img; ++i) {
    MixedFeatureExample& ex = ds.examples[i];
    ex.patches.resize(b);
    for (std::size_t j = 0; j < b; ++j) ex.patches[j] = pixels[i * b + j] / 255.0;
    ex.base_patches = ex.patches;
    ex.feature_names = {0};
    ex.label = raw_labels[i];
  }
  ds.assign_splits_modular();
  return ds;
}

MixedFeatureDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path.string());
  MixedFeatureDataset ds;
  ds.M = 1;
  std::string line;
  std::size_t lineno = 0;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (lineno == 1) {
      // optional header: skip if the first field is not numeric
      char* end = nullptr;
      std::strtod(fields[0].c_str(), &end);
      if (end == fields[0].c_str()) continue;
    }
    MixedFeatureExample ex;
    try {
      long lbl = std::stol(fields.at(0));
      if (lbl < 0) throw std::invalid_argument("negative");
      ex.label = static_cast<std::size_t>(lbl);
    } catch (const std::exception&) {
      throw std::runtime_error("CSV parse error at line " + std::to_string(lineno) +
                               ": bad label field");
    }
    for (std::size_t j = 1; j < fields.size(); ++j) {
      try {
        ex.patches.push_back(std::stod(fields[j]));
      } catch (const std::exception&) {
        throw std::runtime_error("CSV parse error at line " + std::to_string(lineno) +
                                 ": bad numeric field " + std::to_string(j));
      }
    }
    if (ds.b == 0)
      ds.b = ex.patches.size();
    else if (ex.patches.size() != ds.b)
      throw std::runtime_error("CSV parse error at line " + std::to_string(lineno) + ": expected " +
                               std::to_string(ds.b) + " feature values, got " +
                               std::to_string(ex.patches.size()));
    ex.base_patches = ex.patches;
    ex.feature_names = {0};
    max_label = std::max(max_label, ex.label);
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw std::runtime_error("CSV parse error: no data rows");
  ds.K = max_label + 1;
  ds.transforms = TransformSet::identity(ds.b);
  ds.assign_splits_modular();
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vocab_to_json(const FeatureVocabulary& v) {
  json j;
  j["K"] = v.K;
  j["b"] = v.b;
  j["sampling_weights"] = v.sampling_weights;
  if (v.pmi_bandwidth) j["pmi_bandwidth"] = *v.pmi_bandwidth;
  json feats = json::array();
  for (const auto& f : v.features) {
    json jf;
    jf["name"] = f.name;
    jf["label_distribution"] = f.label_distribution;
    jf["representation_mean"] = f.representation_mean;
    jf["representation_scale"] = f.representation_scale;
    feats.push_back(jf);
  }
  j["features"] = feats;
  return j;
}

FeatureVocabulary vocab_from_json(const json& j) {
  FeatureVocabulary v;
  v.K = j.at("K").get<std::size_t>();
  v.b = j.at("b").get<std::size_t>();
  v.sampling_weights = j.at("sampling_weights").get<std::vector<double>>();
  if (j.contains("pmi_bandwidth")) v.pmi_bandwidth = j.at("pmi_bandwidth").get<double>();
  for (const auto& jf : j.at("features")) {
    FeatureSpec f;
    f.name = jf.at("name").get<std::string>();
    f.label_distribution = jf.at("label_distribution").get<std::vector<double>>();
    f.representation_mean = jf.at("representation_mean").get<std::vector<double>>();
    f.representation_scale = jf.at("representation_scale").get<double>();
    v.features.push_back(std::move(f));
  }
  return v;
}

json transforms_to_json(const TransformSet& t) {
  json j;
  j["magnitude_bound"] = t.magnitude_bound;
  json arr = json::array();
  for (const auto& tr : t.transforms) {
    json jt;
    jt["scale"] = tr.scale;
    jt["shift"] = tr.shift;
    jt["permutation"] = tr.permutation;
    arr.push_back(jt);
  }
  j["transforms"] = arr;
  return j;
}

TransformSet transforms_from_json(const json& j) {
  TransformSet t;
  t.magnitude_bound = j.at("magnitude_bound").get<double>();
  for (const auto& jt : j.at("transforms")) {
    PatchTransform tr;
    tr.scale = jt.at("scale").get<double>();
    tr.shift = jt.at("shift").get<std::vector<double>>();
    tr.permutation = jt.at("permutation").get<std::vector<std::size_t>>();
    t.transforms.push_back(std::move(tr));
  }
  return t;
}

}  // namespace

void save_dataset(const MixedFeatureDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t N = ds.size();
  json manifest;
  manifest["schema_version"] = 1;
  manifest["N"] = N;
  manifest["M"] = ds.M;
  manifest["b"] = ds.b;
  manifest["K"] = ds.K;
  manifest["seed"] = ds.seed;
  manifest["has_truth"] = ds.has_truth();
  manifest["has_vocabulary"] = ds.has_vocabulary;
  if (ds.has_vocabulary) manifest["vocabulary"] = vocab_to_json(ds.vocabulary);
  manifest["transforms"] = transforms_to_json(ds.transforms);
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::vector<double> patches, base, truth;
  std::vector<std::int64_t> labels, names, splits;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& ex = ds.examples[i];
    patches.insert(patches.end(), ex.patches.begin(), ex.patches.end());
    base.insert(base.end(), ex.base_patches.begin(), ex.base_patches.end());
    truth.insert(truth.end(), ex.true_distribution.begin(), ex.true_distribution.end());
    labels.push_back(static_cast<std::int64_t>(ex.label));
    for (std::size_t z : ex.feature_names) names.push_back(static_cast<std::int64_t>(z));
    splits.push_back(static_cast<std::int64_t>(ds.split_tags[i]));
  }
  io::write_f64(dir / "patches.f64", patches);
  io::write_f64(dir / "base_patches.f64", base);
  if (ds.has_truth()) io::write_f64(dir / "true_distributions.f64", truth);
  io::write_i64(dir / "labels.i64", labels);
  io::write_i64(dir / "feature_names.i64", names);
  io::write_i64(dir / "splits.i64", splits);
}

MixedFeatureDataset load_dataset(const std::filesystem::path& dir) {
  json manifest = json::parse(io::read_text(dir / "manifest.json"));
  MixedFeatureDataset ds;
  std::size_t N = manifest.at("N").get<std::size_t>();
  ds.M = manifest.at("M").get<std::size_t>();
  ds.b = manifest.at("b").get<std::size_t>();
  ds.K = manifest.at("K").get<std::size_t>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.has_vocabulary = manifest.at("has_vocabulary").get<bool>();
  if (ds.has_vocabulary) ds.vocabulary = vocab_from_json(manifest.at("vocabulary"));
  ds.transforms = transforms_from_json(manifest.at("transforms"));
  bool has_truth = manifest.at("has_truth").get<bool>();

  auto patches = io::read_f64(dir / "patches.f64");
  auto base = io::read_f64(dir / "base_patches.f64");
  std::vector<double> truth;
  if (has_truth) truth = io::read_f64(dir / "true_distributions.f64");
  auto labels = io::read_i64(dir / "labels.i64");
  auto names = io::read_i64(dir / "feature_names.i64");
  auto splits = io::read_i64(dir / "splits.i64");
  if (labels.size() != N || splits.size() != N || patches.size() != N * ds.M * ds.b)
    throw std::runtime_error("dataset directory inconsistent with manifest: " + dir.string());

  ds.examples.resize(N);
  ds.split_tags.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto& ex = ds.examples[i];
    ex.patches.assign(patches.begin() + i * ds.M * ds.b, patches.begin() + (i + 1) * ds.M * ds.b);
    ex.base_patches.assign(base.begin() + i * ds.M * ds.b, base.begin() + (i + 1) * ds.M * ds.b);
    if (has_truth)
      ex.true_distribution.assign(truth.begin() + i * ds.K, truth.begin() + (i + 1) * ds.K);
    ex.label = static_cast<std::size_t>(labels[i]);
    ex.feature_names.assign(names.begin() + i * ds.M, names.begin() + (i + 1) * ds.M);
    ds.split_tags[i] = static_cast<Split>(splits[i]);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Builders

FeatureVocabulary make_random_vocabulary(std::size_t num_features, std::size_t K, std::size_t b,
                                         double dirichlet_alpha, double representation_scale,
                                         std::uint64_t seed) {
  Rng rng(substream_seed(seed, "vocab"));
  FeatureVocabulary v;
  v.K = K;
  v.b = b;
  for (std::size_t z = 0; z < num_features; ++z) {
    FeatureSpec f;
    f.name = "z" + std::to_string(z);
    f.label_distribution.resize(K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      f.label_distribution[k] = gamma_sample(rng, dirichlet_alpha);
      s += f.label_distribution[k];
    }
    for (double& p : f.label_distribution) p /= s;
    f.representation_mean.resize(b);
    for (double& m : f.representation_mean) m = rng.uniform(-1.0, 1.0);
    f.representation_scale = representation_scale;
    v.features.push_back(std::move(f));
  }
  v.sampling_weights.assign(num_features, 1.0 / static_cast<double>(num_features));
  return v;
}

FeatureVocabulary make_pmi_vocabulary(std::size_t num_features, std::size_t K, std::size_t b,
                                      double concentration, double representation_scale,
                                      double bandwidth, std::uint64_t seed) {
  Rng rng(substream_seed(seed, "vocab-pmi"));
  FeatureVocabulary v;
  v.K = K;
  v.b = b;
  // smooth per-class curves; feature z sits at parameter t = z/(|Z|-1)
  std::vector<double> amp(K), phase(K), slope(K);
  for (std::size_t k = 0; k < K; ++k) {
    amp[k] = rng.uniform(0.5, 1.5);
    phase[k] = rng.uniform(0.0, 1.0);
    slope[k] = rng.uniform(-1.0, 1.0);
  }
  for (std::size_t z = 0; z < num_features; ++z) {
    double t = num_features > 1 ? static_cast<double>(z) / (num_features - 1) : 0.0;
    FeatureSpec f;
    f.name = "z" + std::to_string(z);
    f.label_distribution.resize(K);
    double mx = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
      double logit = concentration * (amp[k] * std::sin(2.0 * M_PI * (t + phase[k])) + slope[k] * t);
      f.label_distribution[k] = logit;
      mx = std::max(mx, logit);
    }
    double s = 0.0;
    for (double& p : f.label_distribution) {
      p = std::exp(p - mx);
      s += p;
    }
    for (double& p : f.label_distribution) p /= s;
    f.representation_mean.resize(b);
    for (double& m : f.representation_mean) m = rng.uniform(-1.0, 1.0);
    f.representation_scale = representation_scale;
    v.features.push_back(std::move(f));
  }
  v.sampling_weights.assign(num_features, 1.0 / static_cast<double>(num_features));
  v.pmi_bandwidth = bandwidth;
  return v;
}

TransformSet make_transform_set(std::size_t count, std::size_t b, double magnitude,
                                std::uint64_t seed) {
  if (magnitude == 0.0 || count == 0) return TransformSet::identity(b);
  Rng rng(substream_seed(seed, "transforms"));
  TransformSet t;
  t.magnitude_bound = magnitude;
  for (std::size_t i = 0; i < count; ++i) {
    // pure shifts with ||shift||_2 <= magnitude give a hard displacement bound
    PatchTransform tr;
    tr.shift.resize(b);
    double norm2 = 0.0;
    for (double& s : tr.shift) {
      s = rng.uniform(-1.0, 1.0);
      norm2 += s * s;
    }
    double norm = std::sqrt(norm2);
    double target = magnitude * rng.uniform(0.5, 1.0);
    if (norm > 0)
      for (double& s : tr.shift) s *= target / norm;
    tr.permutation.resize(b);
    std::iota(tr.permutation.begin(), tr.permutation.end(), std::size_t{0});
    t.transforms.push_back(std::move(tr));
  }
  return t;
}

}  // namespace sokd
