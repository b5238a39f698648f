#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmadapt/fusion.hpp"
#include "xmadapt/rng.hpp"
#include "xmadapt/tensor.hpp"

namespace xmadapt {

// The synthetic tumor is the intersection of two ellipses: E_A is visible
// only in the T1-group channels, E_B only in the T2-group channels, so no
// single group determines the mask. All quantities are in pixels.
struct Ellipse {
  double cx = 0, cy = 0;  // center
  double a = 1, b = 1;    // semi-axes
  double theta = 0;       // rotation, radians

  bool contains(double px, double py) const;
};

struct EllipseRange {
  double center_lo = 0, center_hi = 0;  // both coordinates
  double axis_lo = 0, axis_hi = 0;      // both semi-axes
  double rot_lo = 0, rot_hi = 3.14159265358979323846;
};

struct ModalityProfile {
  float base = 0;   // tissue intensity
  float gain = 0;   // added inside the modality's ellipse
  float sigma = 0;  // Gaussian noise level
};

struct PhantomSpec {
  int64_t image_size = 64;
  EllipseRange ellipse_a;  // T1-group lesion
  EllipseRange ellipse_b;  // T2-group lesion
  ModalityProfile t1{0.30f, 0.35f, 0.05f};
  ModalityProfile t1ce{0.25f, 0.30f, 0.05f};
  ModalityProfile t2{0.35f, 0.50f, 0.04f};
  ModalityProfile flair{0.30f, 0.45f, 0.04f};
  int64_t min_intersection = 80;  // pixels
  int64_t max_retries = 100;
  uint64_t seed = 42;

  // Default ellipse ranges scale with image_size: centers in
  // [0.30S, 0.70S], semi-axes in [0.18S, 0.34S], rotation in [0, pi).
  static PhantomSpec defaults(int64_t image_size = 64);
  void validate() const;  // ConfigError on violation
};

struct Sample {
  std::string id;
  Tensor t1, t1ce, t2, flair;  // [S, S], clamped to [0,1]
  Tensor mask;                 // [S, S], exact rasterized E_A ∩ E_B
};

// Pixels whose centers (x+0.5, y+0.5) lie inside both ellipses.
int64_t intersection_area(const Ellipse& ea, const Ellipse& eb, int64_t image_size);

// Draws (E_A, E_B) pairs until the intersection minimum is met; throws
// GenerationError when the retry budget runs out. Exposed so tests can
// reproduce the generator's geometry distribution exactly.
std::pair<Ellipse, Ellipse> sample_ellipse_pair(const PhantomSpec& spec, SplitMix64& rng);

// Fully determined by (spec.seed, index): same pair is always byte-identical.
Sample generate_sample(const PhantomSpec& spec, int64_t index);

// Writes n_train + n_test samples (train indices first) as MMRI tensor files
// plus manifest.json into out_dir; returns the manifest path.
std::string build_dataset(const PhantomSpec& spec, int64_t n_train, int64_t n_test,
                          const std::string& out_dir);

struct ManifestEntry {
  std::string id, t1, t1ce, t2, flair, mask;  // paths relative to the manifest
};

struct Manifest {
  int64_t image_size = 0;
  std::vector<ManifestEntry> samples;
  std::vector<std::string> train_ids, test_ids;
  std::string root;  // directory containing the manifest file

  static Manifest load(const std::string& path);
  const ManifestEntry& entry(const std::string& id) const;  // DataError if absent
  std::string resolve(const std::string& rel) const;
};

struct Batch {
  ModelInput input;
  Tensor mask;  // [B, S, S]
  std::vector<std::string> ids;
};

// One sample's five planes as stored on disk, validated (shapes match the
// manifest's image_size, mask strictly binary -> DataError otherwise).
struct SampleTensors {
  Tensor t1, t1ce, t2, flair, mask;  // each [S, S]
};

SampleTensors load_sample(const Manifest& manifest, const std::string& id);

// Groups modality channels per variant: Cross -> (T1,T1ce) and (T2,Flair)
// group tensors; Early -> one [B,4,S,S] stack in T1,T1ce,T2,Flair order;
// Single(m) -> one [B,1,S,S]. samples[i] belongs to ids[i].
Batch assemble_batch(const std::vector<const SampleTensors*>& samples,
                     const std::vector<std::string>& ids, const ModelVariant& variant);

// load_sample + assemble_batch; the training loop keeps its own sample cache
// instead so 30 epochs do not re-read every file 30 times.
Batch load_batch(const Manifest& manifest, const std::vector<std::string>& ids,
                 const ModelVariant& variant);

}  // namespace xmadapt
