#include "xmadapt/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "xmadapt/error.hpp"
#include "xmadapt/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace xmadapt {

bool Ellipse::contains(double px, double py) const {
  double dx = px - cx, dy = py - cy;
  double ct = std::cos(theta), st = std::sin(theta);
  double u = dx * ct + dy * st;
  double v = -dx * st + dy * ct;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

PhantomSpec PhantomSpec::defaults(int64_t image_size) {
  PhantomSpec spec;
  spec.image_size = image_size;
  double s = static_cast<double>(image_size);
  EllipseRange r;
  r.center_lo = 0.30 * s;
  r.center_hi = 0.70 * s;
  r.axis_lo = 0.18 * s;
  r.axis_hi = 0.34 * s;
  spec.ellipse_a = r;
  spec.ellipse_b = r;
  return spec;
}

void PhantomSpec::validate() const {
  if (image_size < 4) throw ConfigError("phantom image_size must be at least 4");
  for (const EllipseRange* r : {&ellipse_a, &ellipse_b}) {
    if (r->center_lo > r->center_hi || r->axis_lo > r->axis_hi || r->rot_lo > r->rot_hi)
      throw ConfigError("phantom ellipse range has lo > hi");
    if (r->axis_lo <= 0) throw ConfigError("phantom semi-axes must be positive");
  }
  for (const ModalityProfile* p : {&t1, &t1ce, &t2, &flair})
    if (p->sigma < 0) throw ConfigError("phantom noise sigma must be nonnegative");
  if (min_intersection < 1) throw ConfigError("phantom min_intersection must be >= 1");
  if (max_retries < 1) throw ConfigError("phantom max_retries must be >= 1");
}

int64_t intersection_area(const Ellipse& ea, const Ellipse& eb, int64_t image_size) {
  int64_t n = 0;
  for (int64_t y = 0; y < image_size; ++y)
    for (int64_t x = 0; x < image_size; ++x) {
      double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      if (ea.contains(px, py) && eb.contains(px, py)) ++n;
    }
  return n;
}

namespace {

Ellipse draw_ellipse(const EllipseRange& r, SplitMix64& rng) {
  Ellipse e;
  e.cx = rng.uniform(r.center_lo, r.center_hi);
  e.cy = rng.uniform(r.center_lo, r.center_hi);
  e.a = rng.uniform(r.axis_lo, r.axis_hi);
  e.b = rng.uniform(r.axis_lo, r.axis_hi);
  e.theta = rng.uniform(r.rot_lo, r.rot_hi);
  return e;
}

}  // namespace

std::pair<Ellipse, Ellipse> sample_ellipse_pair(const PhantomSpec& spec, SplitMix64& rng) {
  for (int64_t attempt = 0; attempt < spec.max_retries; ++attempt) {
    Ellipse ea = draw_ellipse(spec.ellipse_a, rng);
    Ellipse eb = draw_ellipse(spec.ellipse_b, rng);
    if (intersection_area(ea, eb, spec.image_size) >= spec.min_intersection)
      return {ea, eb};
  }
  throw GenerationError("could not sample an ellipse pair with intersection >= " +
                        std::to_string(spec.min_intersection) + " pixels within " +
                        std::to_string(spec.max_retries) + " retries");
}

Sample generate_sample(const PhantomSpec& spec, int64_t index) {
  spec.validate();
  SplitMix64 rng(spec.seed, static_cast<uint64_t>(index));
  auto [ea, eb] = sample_ellipse_pair(spec, rng);

  int64_t s = spec.image_size;
  size_t px_count = static_cast<size_t>(s * s);
  std::vector<uint8_t> in_a(px_count), in_b(px_count);
  std::vector<float> mask(px_count);
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      double cxp = static_cast<double>(x) + 0.5, cyp = static_cast<double>(y) + 0.5;
      size_t i = static_cast<size_t>(y * s + x);
      in_a[i] = ea.contains(cxp, cyp) ? 1 : 0;
      in_b[i] = eb.contains(cxp, cyp) ? 1 : 0;
      mask[i] = (in_a[i] && in_b[i]) ? 1.0f : 0.0f;
    }

  // Noise draw order is fixed (t1, t1ce, t2, flair; row-major pixels) and
  // noise is drawn even at sigma = 0 so the geometry never shifts with it.
  auto render = [&](const ModalityProfile& prof, const std::vector<uint8_t>& ind) {
    std::vector<float> img(px_count);
    for (size_t i = 0; i < px_count; ++i) {
      float v = prof.base + prof.gain * static_cast<float>(ind[i]) +
                prof.sigma * static_cast<float>(rng.normal());
      img[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return Tensor::from_data({s, s}, std::move(img));
  };

  Sample out;
  out.id = "sample_" + std::string(6 - std::min<size_t>(6, std::to_string(index).size()), '0') +
           std::to_string(index);
  out.t1 = render(spec.t1, in_a);
  out.t1ce = render(spec.t1ce, in_a);
  out.t2 = render(spec.t2, in_b);
  out.flair = render(spec.flair, in_b);
  out.mask = Tensor::from_data({s, s}, std::move(mask));
  return out;
}

std::string build_dataset(const PhantomSpec& spec, int64_t n_train, int64_t n_test,
                          const std::string& out_dir) {
  spec.validate();
  if (n_train < 1 || n_test < 1)
    throw ConfigError("dataset needs at least one training and one test sample");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

  json manifest;
  manifest["image_size"] = spec.image_size;
  manifest["samples"] = json::array();
  json train_ids = json::array(), test_ids = json::array();

  for (int64_t i = 0; i < n_train + n_test; ++i) {
    Sample sample = generate_sample(spec, i);
    json entry;
    entry["id"] = sample.id;
    const std::pair<const char*, const Tensor*> files[] = {
        {"t1", &sample.t1}, {"t1ce", &sample.t1ce}, {"t2", &sample.t2},
        {"flair", &sample.flair}, {"mask", &sample.mask}};
    for (auto& [key, tensor] : files) {
      std::string rel = sample.id + "_" + key + ".mmri";
      save_tensor((fs::path(out_dir) / rel).string(), *tensor);
      entry[key] = rel;
    }
    manifest["samples"].push_back(entry);
    (i < n_train ? train_ids : test_ids).push_back(sample.id);
  }
  manifest["split"] = {{"train", train_ids}, {"test", test_ids}};

  std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream f(manifest_path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest " + manifest_path);
  f << manifest.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + manifest_path);
  return manifest_path;
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  json doc;
  try {
    f >> doc;
  } catch (const json::exception& e) {
    throw FormatError("manifest parse error in " + path + ": " + e.what());
  }
  Manifest m;
  try {
    m.image_size = doc.at("image_size").get<int64_t>();
    for (const json& s : doc.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.t1 = s.at("t1").get<std::string>();
      e.t1ce = s.at("t1ce").get<std::string>();
      e.t2 = s.at("t2").get<std::string>();
      e.flair = s.at("flair").get<std::string>();
      e.mask = s.at("mask").get<std::string>();
      m.samples.push_back(std::move(e));
    }
    m.train_ids = doc.at("split").at("train").get<std::vector<std::string>>();
    m.test_ids = doc.at("split").at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("manifest schema error in " + path + ": " + e.what());
  }
  m.root = fs::path(path).parent_path().string();
  return m;
}

const ManifestEntry& Manifest::entry(const std::string& id) const {
  for (const ManifestEntry& e : samples)
    if (e.id == id) return e;
  throw DataError("sample id '" + id + "' not present in manifest");
}

std::string Manifest::resolve(const std::string& rel) const {
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(root) / p).string();
}

SampleTensors load_sample(const Manifest& manifest, const std::string& id) {
  const ManifestEntry& e = manifest.entry(id);
  int64_t s = manifest.image_size;
  auto load_plane = [&](const std::string& rel) {
    Tensor t = load_tensor(manifest.resolve(rel));
    if (t.ndim() != 2 || t.dim(0) != s || t.dim(1) != s)
      throw DataError("tensor " + rel + " has shape " + shape_str(t.shape()) +
                      ", manifest says image_size " + std::to_string(s));
    return t;
  };
  SampleTensors st;
  st.t1 = load_plane(e.t1);
  st.t1ce = load_plane(e.t1ce);
  st.t2 = load_plane(e.t2);
  st.flair = load_plane(e.flair);
  st.mask = load_plane(e.mask);
  for (float v : st.mask.data())
    if (v != 0.0f && v != 1.0f)
      throw DataError("mask for sample " + e.id + " contains non-binary values");
  return st;
}

Batch assemble_batch(const std::vector<const SampleTensors*>& samples,
                     const std::vector<std::string>& ids, const ModelVariant& variant) {
  if (ids.empty()) throw ContractError("assemble_batch: empty id list");
  if (samples.size() != ids.size())
    throw ContractError("assemble_batch: " + std::to_string(samples.size()) + " samples for " +
                        std::to_string(ids.size()) + " ids");
  int64_t s = samples[0]->t1.dim(0);
  int64_t bsz = static_cast<int64_t>(ids.size());
  size_t plane = static_cast<size_t>(s * s);

  // Channel layouts per variant; each entry is the list of modality planes
  // stacked into one input tensor.
  std::vector<std::vector<const Tensor SampleTensors::*>> groups;
  switch (variant.kind) {
    case ModelVariant::Kind::Cross:
      groups = {{&SampleTensors::t1, &SampleTensors::t1ce},
                {&SampleTensors::t2, &SampleTensors::flair}};
      break;
    case ModelVariant::Kind::Early:
      groups = {{&SampleTensors::t1, &SampleTensors::t1ce, &SampleTensors::t2,
                 &SampleTensors::flair}};
      break;
    case ModelVariant::Kind::Single: {
      const Tensor SampleTensors::*field = nullptr;
      switch (variant.modality) {
        case Modality::T1: field = &SampleTensors::t1; break;
        case Modality::T1ce: field = &SampleTensors::t1ce; break;
        case Modality::T2: field = &SampleTensors::t2; break;
        case Modality::Flair: field = &SampleTensors::flair; break;
      }
      groups = {{field}};
      break;
    }
  }

  std::vector<std::vector<float>> stacked;
  for (const auto& g : groups)
    stacked.emplace_back(static_cast<size_t>(bsz) * g.size() * plane);
  std::vector<float> masks(static_cast<size_t>(bsz) * plane);

  for (int64_t b = 0; b < bsz; ++b) {
    const SampleTensors& st = *samples[static_cast<size_t>(b)];
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      for (size_t ci = 0; ci < groups[gi].size(); ++ci) {
        const Tensor& plane_t = st.*(groups[gi][ci]);
        std::copy(plane_t.data().begin(), plane_t.data().end(),
                  stacked[gi].begin() +
                      (static_cast<size_t>(b) * groups[gi].size() + ci) * plane);
      }
    }
    std::copy(st.mask.data().begin(), st.mask.data().end(),
              masks.begin() + static_cast<size_t>(b) * plane);
  }

  Batch batch;
  batch.ids = ids;
  batch.mask = Tensor::from_data({bsz, s, s}, std::move(masks));
  if (variant.kind == ModelVariant::Kind::Cross) {
    batch.input.t1_group = Tensor::from_data({bsz, 2, s, s}, std::move(stacked[0]));
    batch.input.t2_group = Tensor::from_data({bsz, 2, s, s}, std::move(stacked[1]));
  } else {
    int64_t k = static_cast<int64_t>(groups[0].size());
    batch.input.stacked = Tensor::from_data({bsz, k, s, s}, std::move(stacked[0]));
  }
  return batch;
}

Batch load_batch(const Manifest& manifest, const std::vector<std::string>& ids,
                 const ModelVariant& variant) {
  if (ids.empty()) throw ContractError("load_batch: empty id list");
  std::vector<SampleTensors> loaded;
  loaded.reserve(ids.size());
  for (const std::string& id : ids) loaded.push_back(load_sample(manifest, id));
  std::vector<const SampleTensors*> ptrs;
  ptrs.reserve(loaded.size());
  for (const SampleTensors& st : loaded) ptrs.push_back(&st);
  return assemble_batch(ptrs, ids, variant);
}

}  // namespace xmadapt
