#include "bandsel/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bandsel/rng.hpp"

namespace fs = std::filesystem;

namespace bandsel {

// ---------------------------------------------------------------------------
// HSC1 binary format
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    std::ifstream in;
    std::size_t offset = 0;
    std::string path;

    Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw DataFormatError("cannot open cube file: " + p);
    }

    void read_bytes(void* dst, std::size_t n) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw DataFormatError("truncated cube file " + path + " at byte offset " +
                                  std::to_string(offset));
        offset += n;
    }

    std::uint32_t get_u32() {
        unsigned char b[4];
        read_bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }

    float get_f32() {
        const std::uint32_t bits = get_u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

void HyperCube::validate() const {
    if (bands.rank() != 3) throw DataFormatError("cube: bands tensor must be rank 3");
    if (wavelengths.size() != band_count())
        throw DataFormatError("cube: wavelength count does not match band count");
    for (std::size_t i = 1; i < wavelengths.size(); ++i)
        if (!(wavelengths[i] > wavelengths[i - 1]))
            throw DataFormatError("cube: wavelengths must be strictly increasing");
    for (float v : wavelengths)
        if (!std::isfinite(v)) throw DataFormatError("cube: non-finite wavelength");
    if (!bands.all_finite()) throw DataFormatError("cube: non-finite radiance value");
}

void write_cube(const std::string& path, const HyperCube& cube) {
    cube.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot open cube file for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(cube.height()));
    put_u32(out, static_cast<std::uint32_t>(cube.width()));
    put_u32(out, static_cast<std::uint32_t>(cube.band_count()));
    put_u32(out, cube.subject_id);
    put_u32(out, cube.session_id);
    for (float w : cube.wavelengths) put_f32(out, w);
    for (float v : cube.bands.data) put_f32(out, v);
    if (!out) throw DataFormatError("write failure on cube file: " + path);
}

HyperCube read_cube(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataFormatError("bad magic in cube file " + path + " at byte offset 0");
    const std::uint32_t H = r.get_u32();
    const std::uint32_t W = r.get_u32();
    const std::uint32_t C = r.get_u32();
    if (H == 0 || W == 0 || C == 0)
        throw DataFormatError("zero extent in cube file " + path + " at byte offset 4");
    HyperCube cube;
    cube.subject_id = r.get_u32();
    cube.session_id = r.get_u32();
    cube.wavelengths.resize(C);
    for (std::uint32_t c = 0; c < C; ++c) {
        const std::size_t off = r.offset;
        cube.wavelengths[c] = r.get_f32();
        if (c > 0 && !(cube.wavelengths[c] > cube.wavelengths[c - 1]))
            throw DataFormatError("non-increasing wavelengths in cube file " + path +
                                  " at byte offset " + std::to_string(off));
    }
    cube.bands = TensorF({C, H, W});
    for (auto& v : cube.bands.data) v = r.get_f32();
    cube.validate();
    return cube;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::vector<std::uint32_t> DatasetManifest::subject_ids() const {
    std::vector<std::uint32_t> ids;
    for (const auto& e : entries) ids.push_back(e.subject_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot open manifest for writing: " + path);
    out << "#HSCMANIFEST v1\n";
    for (const auto& e : manifest.entries)
        out << e.relative_path << ',' << e.subject_id << ',' << e.session_id << '\n';
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw DataFormatError("empty manifest: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "#HSCMANIFEST v1")
        throw DataFormatError("manifest " + path + " missing \"#HSCMANIFEST v1\" header");
    DatasetManifest m;
    m.root_dir = fs::path(path).parent_path().string();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c2 == c1)
            throw DataFormatError("manifest " + path + " line " + std::to_string(lineno) +
                                  ": expected relative_path,subject_id,session_id");
        ManifestEntry e;
        e.relative_path = line.substr(0, c1);
        try {
            e.subject_id = static_cast<std::uint32_t>(std::stoul(line.substr(c1 + 1, c2 - c1 - 1)));
            e.session_id = static_cast<std::uint32_t>(std::stoul(line.substr(c2 + 1)));
        } catch (const std::exception&) {
            throw DataFormatError("manifest " + path + " line " + std::to_string(lineno) +
                                  ": malformed id field");
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty())
        throw DataFormatError("manifest " + path + " lists no cubes");
    return m;
}

std::vector<HyperCube> load_cubes(const DatasetManifest& manifest) {
    std::vector<HyperCube> cubes;
    cubes.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        const fs::path p = fs::path(manifest.root_dir) / e.relative_path;
        HyperCube cube = read_cube(p.string());
        if (cube.subject_id != e.subject_id || cube.session_id != e.session_id)
            throw DataFormatError("cube " + p.string() +
                                  " disagrees with its manifest ids");
        if (!cubes.empty()) {
            const auto& ref = cubes.front();
            if (cube.bands.shape != ref.bands.shape ||
                cube.wavelengths != ref.wavelengths)
                throw DataFormatError("cube " + p.string() +
                                      " has mismatched shape or wavelengths");
        }
        cubes.push_back(std::move(cube));
    }
    return cubes;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

std::vector<double> mean_spectrum(const std::vector<HyperCube>& cubes,
                                  const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ConfigError("mean_spectrum: empty index set");
    const std::size_t C = cubes.front().band_count();
    const std::size_t plane = cubes.front().height() * cubes.front().width();
    std::vector<double> mean(C, 0.0);
    for (std::size_t idx : indices) {
        const auto& cube = cubes[idx];
        for (std::size_t c = 0; c < C; ++c) {
            const float* p = cube.bands.ptr() + c * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            mean[c] += acc;
        }
    }
    const double denom = static_cast<double>(indices.size() * plane);
    for (auto& v : mean) v /= denom;
    return mean;
}

void subtract_spectrum(std::vector<HyperCube>& cubes, const std::vector<double>& spectrum) {
    for (auto& cube : cubes) {
        if (spectrum.size() != cube.band_count())
            throw ConfigError("subtract_spectrum: band count mismatch");
        const std::size_t plane = cube.height() * cube.width();
        for (std::size_t c = 0; c < spectrum.size(); ++c) {
            const float m = static_cast<float>(spectrum[c]);
            float* p = cube.bands.ptr() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] -= m;
        }
    }
}

void write_spectrum(const std::string& path, const std::vector<double>& spectrum,
                    const std::vector<float>& wavelengths) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot open spectrum file for writing: " + path);
    out << "band_index,wavelength_nm,mean\n";
    char buf[64];
    for (std::size_t c = 0; c < spectrum.size(); ++c) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.17g\n", c,
                      static_cast<double>(wavelengths[c]), spectrum[c]);
        out << buf;
    }
}

std::vector<double> read_spectrum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open spectrum file: " + path);
    std::string line;
    std::getline(in, line);
    std::vector<double> spectrum;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c2 == c1)
            throw DataFormatError("malformed spectrum file: " + path);
        spectrum.push_back(std::stod(line.substr(c2 + 1)));
    }
    return spectrum;
}

// ---------------------------------------------------------------------------
// Gallery/probe split
// ---------------------------------------------------------------------------

Split split_gallery_probe(const DatasetManifest& manifest, const SplitSpec& spec) {
    if (spec.gallery_cubes_per_subject < 1)
        throw ConfigError("split: gallery_cubes_per_subject must be >= 1");
    std::map<std::uint32_t, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        by_subject[manifest.entries[i].subject_id].push_back(i);

    Rng rng(spec.seed);
    Split split;
    const std::size_t g = static_cast<std::size_t>(spec.gallery_cubes_per_subject);
    for (auto& [subject, idx] : by_subject) {
        if (idx.size() <= g)
            throw ConfigError("split: subject " + std::to_string(subject) + " owns " +
                              std::to_string(idx.size()) + " cubes, need more than " +
                              std::to_string(g));
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < g ? split.gallery : split.probe).push_back(idx[i]);
    }
    std::sort(split.gallery.begin(), split.gallery.end());
    std::sort(split.probe.begin(), split.probe.end());
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void GenConfig::validate() const {
    if (num_subjects < 2) throw ConfigError("gen: need at least 2 subjects");
    if (cubes_per_subject < 2) throw ConfigError("gen: need at least 2 cubes per subject");
    if (bands < 1 || height < 2 || width < 2) throw ConfigError("gen: bad cube extents");
    if (informative_bands.empty())
        throw ConfigError("gen: informative band set must not be empty");
    for (int b : informative_bands)
        if (b < 0 || b >= bands)
            throw ConfigError("gen: informative band " + std::to_string(b) +
                              " outside [0," + std::to_string(bands) + ")");
    if (!(snr > 0.0)) throw ConfigError("gen: snr must be positive");
}

namespace {

// Smooth zero-mean unit-RMS field: a handful of random Gaussian blobs.
std::vector<double> smooth_field(Rng& rng, int H, int W) {
    std::vector<double> f(static_cast<std::size_t>(H) * W, 0.0);
    const int blobs = 6;
    for (int k = 0; k < blobs; ++k) {
        const double cy = rng.uniform(0.2 * H, 0.8 * H);
        const double cx = rng.uniform(0.2 * W, 0.8 * W);
        const double sigma = rng.uniform(0.08 * std::min(H, W), 0.25 * std::min(H, W));
        const double amp = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                f[static_cast<std::size_t>(y) * W + x] +=
                    amp * std::exp(-d2 / (2.0 * sigma * sigma));
            }
    }
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double power = 0.0;
    for (auto& v : f) {
        v -= mean;
        power += v * v;
    }
    const double rms = std::sqrt(power / static_cast<double>(f.size()));
    for (auto& v : f) v /= (rms > 0.0 ? rms : 1.0);
    return f;
}

double bilinear(const std::vector<double>& f, int H, int W, double y, double x) {
    if (y < 0.0 || x < 0.0 || y > H - 1 || x > W - 1) return 0.0;
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, H - 1);
    const int x1 = std::min(x0 + 1, W - 1);
    const double fy = y - y0, fx = x - x0;
    const double a = f[static_cast<std::size_t>(y0) * W + x0];
    const double b = f[static_cast<std::size_t>(y0) * W + x1];
    const double c = f[static_cast<std::size_t>(y1) * W + x0];
    const double d = f[static_cast<std::size_t>(y1) * W + x1];
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx;
}

// Small affine jitter (translation, rotation, isotropic scale) about the
// image center, sampled once per cube.
std::vector<double> jitter_field(const std::vector<double>& f, int H, int W, Rng& rng) {
    const double ty = rng.uniform(-1.0, 1.0);
    const double tx = rng.uniform(-1.0, 1.0);
    const double theta = rng.uniform(-0.035, 0.035);
    const double scale = 1.0 + rng.uniform(-0.02, 0.02);
    const double cy = 0.5 * (H - 1), cx = 0.5 * (W - 1);
    const double cosv = std::cos(theta) / scale, sinv = std::sin(theta) / scale;
    std::vector<double> out(static_cast<std::size_t>(H) * W, 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double dy = y - cy - ty, dx = x - cx - tx;
            const double sy = cy + cosv * dy - sinv * dx;
            const double sx = cx + sinv * dy + cosv * dx;
            out[static_cast<std::size_t>(y) * W + x] = bilinear(f, H, W, sy, sx);
        }
    return out;
}

}  // namespace

std::vector<HyperCube> gen_synthetic(const GenConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const int H = config.height, W = config.width, C = config.bands;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    // Subject-independent shared structure, one field per band.
    std::vector<std::vector<double>> shared(C);
    for (int c = 0; c < C; ++c) shared[static_cast<std::size_t>(c)] = smooth_field(rng, H, W);

    // Per-subject templates and spectral signatures on informative bands.
    std::vector<std::vector<double>> templates;
    std::vector<std::vector<double>> signatures;  // length C, zero off-support
    double signal_power = 0.0;
    for (int s = 0; s < config.num_subjects; ++s) {
        templates.push_back(smooth_field(rng, H, W));
        std::vector<double> sig(C, 0.0);
        for (int b : config.informative_bands) {
            const double mag = rng.uniform(0.7, 1.3);
            sig[static_cast<std::size_t>(b)] = (rng.uniform() < 0.5 ? -mag : mag);
            signal_power += mag * mag;
        }
        signatures.push_back(std::move(sig));
    }
    signal_power /= static_cast<double>(config.num_subjects * config.informative_bands.size());
    const double noise_std = std::sqrt(signal_power / config.snr);

    std::vector<float> wavelengths(C);
    for (int c = 0; c < C; ++c) wavelengths[static_cast<std::size_t>(c)] = 400.0f + 10.0f * c;

    std::vector<HyperCube> cubes;
    for (int s = 0; s < config.num_subjects; ++s) {
        for (int j = 0; j < config.cubes_per_subject; ++j) {
            const auto warped = jitter_field(templates[static_cast<std::size_t>(s)], H, W, rng);
            HyperCube cube;
            cube.subject_id = static_cast<std::uint32_t>(s);
            cube.session_id = static_cast<std::uint32_t>(j);
            cube.wavelengths = wavelengths;
            cube.bands = TensorF({static_cast<std::size_t>(C), static_cast<std::size_t>(H),
                                  static_cast<std::size_t>(W)});
            for (int c = 0; c < C; ++c) {
                const double sig = signatures[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)];
                float* p = cube.bands.ptr() + static_cast<std::size_t>(c) * plane;
                const auto& base = shared[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < plane; ++i) {
                    double v = base[i] + rng.normal(0.0, noise_std);
                    if (sig != 0.0) v += sig * warped[i];
                    p[i] = static_cast<float>(v);
                }
            }
            cubes.push_back(std::move(cube));
        }
    }
    return cubes;
}

DatasetManifest write_dataset(const std::string& dir, const std::vector<HyperCube>& cubes) {
    fs::create_directories(dir);
    DatasetManifest manifest;
    manifest.root_dir = dir;
    char name[64];
    for (std::size_t i = 0; i < cubes.size(); ++i) {
        std::snprintf(name, sizeof(name), "cube%04zu.hsc", i);
        write_cube((fs::path(dir) / name).string(), cubes[i]);
        manifest.entries.push_back({name, cubes[i].subject_id, cubes[i].session_id});
    }
    write_manifest((fs::path(dir) / "manifest.txt").string(), manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// Trainer glue
// ---------------------------------------------------------------------------

std::vector<int> subjects_to_labels(const std::vector<HyperCube>& cubes,
                                    std::vector<std::uint32_t>* subject_order) {
    std::vector<std::uint32_t> ids;
    for (const auto& c : cubes) ids.push_back(c.subject_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<int> labels;
    for (const auto& c : cubes) {
        const auto it = std::lower_bound(ids.begin(), ids.end(), c.subject_id);
        labels.push_back(static_cast<int>(it - ids.begin()));
    }
    if (subject_order) *subject_order = ids;
    return labels;
}

TrainSet<float> to_train_set(const std::vector<HyperCube>& cubes,
                             const std::vector<std::size_t>& indices,
                             const std::vector<int>& labels) {
    if (indices.empty()) throw ConfigError("to_train_set: empty index set");
    const auto& ref = cubes[indices.front()];
    TrainSet<float> set;
    set.inputs = TensorF({indices.size(), ref.band_count(), ref.height(), ref.width()});
    const std::size_t stride = ref.bands.size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::copy_n(cubes[indices[i]].bands.ptr(), stride, set.inputs.ptr() + i * stride);
        set.labels.push_back(labels[indices[i]]);
    }
    return set;
}

std::vector<HyperCube> slice_band(const std::vector<HyperCube>& cubes, std::size_t band) {
    std::vector<HyperCube> out;
    out.reserve(cubes.size());
    for (const auto& cube : cubes) {
        if (band >= cube.band_count())
            throw ConfigError("slice_band: band index out of range");
        HyperCube sliced;
        sliced.subject_id = cube.subject_id;
        sliced.session_id = cube.session_id;
        sliced.wavelengths = {cube.wavelengths[band]};
        const std::size_t plane = cube.height() * cube.width();
        sliced.bands = TensorF({1, cube.height(), cube.width()});
        std::copy_n(cube.bands.ptr() + band * plane, plane, sliced.bands.ptr());
        out.push_back(std::move(sliced));
    }
    return out;
}

}  // namespace bandsel
