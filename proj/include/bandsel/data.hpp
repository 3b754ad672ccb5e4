#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bandsel/tensor.hpp"
#include "bandsel/trainer.hpp"

namespace bandsel {

// One sample: an H x W x C radiance cube with per-band center wavelengths
// (nm, strictly increasing) and subject/session labels. Stored band-major as
// (C, H, W), 32-bit floats, matching the on-disk HSC1 layout.
struct HyperCube {
    TensorF bands;                   // (C, H, W)
    std::vector<float> wavelengths;  // nm, strictly increasing
    std::uint32_t subject_id = 0;
    std::uint32_t session_id = 0;

    std::size_t band_count() const { return bands.dim(0); }
    std::size_t height() const { return bands.dim(1); }
    std::size_t width() const { return bands.dim(2); }

    void validate() const;
};

// HSC1 cube file: magic "HSC1", LE u32 H, W, C, subject_id, session_id,
// then C LE f32 wavelengths, then C band planes of H*W LE f32 values
// (row-major within a plane). Round trips are bit-exact.
void write_cube(const std::string& path, const HyperCube& cube);
HyperCube read_cube(const std::string& path);

struct ManifestEntry {
    std::string relative_path;
    std::uint32_t subject_id = 0;
    std::uint32_t session_id = 0;
};

// Line-oriented manifest with header "#HSCMANIFEST v1" and rows
// "relative_path,subject_id,session_id". All referenced cubes must share
// C, H, W and wavelengths; load_cubes enforces that.
struct DatasetManifest {
    std::string root_dir;
    std::vector<ManifestEntry> entries;

    std::vector<std::uint32_t> subject_ids() const;  // sorted unique
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

std::vector<HyperCube> load_cubes(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Normalization: per-band scalar mean over all training pixels, subtracted
// from every pixel of that band (train and eval alike).
// ---------------------------------------------------------------------------

std::vector<double> mean_spectrum(const std::vector<HyperCube>& cubes,
                                  const std::vector<std::size_t>& indices);
void subtract_spectrum(std::vector<HyperCube>& cubes, const std::vector<double>& spectrum);

void write_spectrum(const std::string& path, const std::vector<double>& spectrum,
                    const std::vector<float>& wavelengths);
std::vector<double> read_spectrum(const std::string& path);

// ---------------------------------------------------------------------------
// Gallery/probe split
// ---------------------------------------------------------------------------

struct SplitSpec {
    int gallery_cubes_per_subject = 2;
    std::uint64_t seed = 1;
};

struct Split {
    std::vector<std::size_t> gallery;  // indices into the manifest/cube list
    std::vector<std::size_t> probe;
};

// Deterministic under spec.seed; gallery and probe are disjoint and every
// subject appears in both. Requires each subject to own strictly more cubes
// than gallery_cubes_per_subject.
Split split_gallery_probe(const DatasetManifest& manifest, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Synthetic cube generator with planted informative bands
// ---------------------------------------------------------------------------

struct GenConfig {
    int num_subjects = 10;
    int cubes_per_subject = 6;
    int bands = 8;
    int height = 32;
    int width = 32;
    std::set<int> informative_bands{1, 4, 6};
    double snr = 10.0;  // signal power on informative bands / noise power
    std::uint64_t seed = 1;

    void validate() const;
};

// Each subject gets a fixed random spatial template and a spectral signature
// supported only on the informative bands; non-informative bands carry a
// subject-independent shared structure plus noise. Session variation is a
// small random affine jitter of the subject template.
std::vector<HyperCube> gen_synthetic(const GenConfig& config);

// Writes cubes as <prefix>NNN.hsc plus a manifest.txt; returns the manifest.
DatasetManifest write_dataset(const std::string& dir, const std::vector<HyperCube>& cubes);

// ---------------------------------------------------------------------------
// Glue toward the trainer
// ---------------------------------------------------------------------------

// Maps sorted unique subject ids to contiguous class labels.
std::vector<int> subjects_to_labels(const std::vector<HyperCube>& cubes,
                                    std::vector<std::uint32_t>* subject_order = nullptr);

TrainSet<float> to_train_set(const std::vector<HyperCube>& cubes,
                             const std::vector<std::size_t>& indices,
                             const std::vector<int>& labels);

// Extracts a single band as a 1-band cube set (used by the per-band sweep).
std::vector<HyperCube> slice_band(const std::vector<HyperCube>& cubes, std::size_t band);

}  // namespace bandsel
