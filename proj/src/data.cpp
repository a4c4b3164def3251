#include "dacnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

namespace fs = std::filesystem;

namespace dacnn {

void DatasetSpec::validate() const {
    if (num_images < 1) throw SpecError("dataset needs at least one image");
    if (num_classes < 1) throw SpecError("dataset needs at least one class");
    if (height < 8 || width < 8) throw SpecError("dataset images must be at least 8x8");
    if (shapes_per_image < 0) throw SpecError("shapes_per_image must be >= 0");
    if (!(depth_min > 0.0) || !(depth_max > depth_min)) throw SpecError("depth range must satisfy 0 < min < max");
    if (noise_sigma < 0.0 || depth_noise_sigma < 0.0) throw SpecError("noise sigma must be >= 0");
    if (hole_prob < 0.0 || hole_prob > 1.0) throw SpecError("hole probability must be in [0,1]");
}

namespace {

struct ClassStyle {
    double band_lo = 0.0, band_hi = 0.0;  // depth band, meters
    double r = 0.0, g = 0.0, b = 0.0;     // palette mean color
};

// Background sits in a far band; object classes occupy disjoint nearer bands.
// The ambiguous class reuses the background palette, so it is separable only
// through depth.
std::vector<ClassStyle> class_styles(const DatasetSpec& spec) {
    std::vector<ClassStyle> styles(static_cast<size_t>(spec.num_classes));
    styles[0] = ClassStyle{0.85 * spec.depth_max, spec.depth_max, 0.45, 0.43, 0.40};
    const int n_obj = spec.num_classes - 1;
    if (n_obj <= 0) return styles;
    const double span_hi = 0.75 * spec.depth_max;
    const double slot = (span_hi - spec.depth_min) / n_obj;
    for (int c = 1; c < spec.num_classes; ++c) {
        ClassStyle& s = styles[static_cast<size_t>(c)];
        const double lo = spec.depth_min + (c - 1) * slot;
        s.band_lo = lo + 0.2 * slot;
        s.band_hi = lo + 0.8 * slot;
        // deterministic distinct palette per class
        switch (c % 4) {
            case 1: s.r = 0.75; s.g = 0.25; s.b = 0.20; break;
            case 2: s.r = 0.20; s.g = 0.65; s.b = 0.30; break;
            case 3: s.r = 0.20; s.g = 0.45; s.b = 0.80; break;
            default: s.r = 0.70; s.g = 0.65; s.b = 0.20; break;
        }
    }
    if (spec.color_ambiguity && spec.num_classes >= 2) {
        const int amb = spec.num_classes >= 3 ? 2 : 1;
        ClassStyle& s = styles[static_cast<size_t>(amb)];
        s.r = styles[0].r;
        s.g = styles[0].g;
        s.b = styles[0].b;
    }
    return styles;
}

struct Shape {
    int cls = 0;
    bool disc = false;
    int64_t cy = 0, cx = 0;   // center
    int64_t half_h = 0, half_w = 0;  // rect half extents / disc radius in half_h
    double color[3] = {0, 0, 0};
    double depth = 0.0;
};

Scene generate_scene(const DatasetSpec& spec, const std::vector<ClassStyle>& styles, Rng& rng) {
    const int64_t h = spec.height, w = spec.width;
    Scene scene;
    scene.rgb = Tensor({3, h, w});
    scene.depth = DepthMap(h, w);
    scene.labels = LabelMap(h, w, 0);

    // one depth per (image, class): objects are fronto-parallel, so noise-free
    // per-class depth variance is exactly zero
    std::vector<double> class_depth(styles.size());
    for (size_t c = 0; c < styles.size(); ++c) {
        class_depth[c] = styles[c].band_hi > styles[c].band_lo
                             ? rng.uniform(styles[c].band_lo, styles[c].band_hi)
                             : styles[c].band_lo;
    }

    double bg_color[3];
    bg_color[0] = std::clamp(styles[0].r + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    bg_color[1] = std::clamp(styles[0].g + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    bg_color[2] = std::clamp(styles[0].b + rng.uniform(-0.05, 0.05), 0.0, 1.0);

    const int n_obj_classes = spec.num_classes - 1;
    std::vector<Shape> shapes;
    for (int s = 0; s < (n_obj_classes > 0 ? spec.shapes_per_image : 0); ++s) {
        // object extents scale with the image so small frames stay usable
        const double smin = static_cast<double>(std::min(h, w));
        const double half_lo = std::max(2.0, 0.08 * smin);
        const double half_hi = std::max(half_lo + 1.0, 0.19 * smin);
        Shape shape;
        shape.cls = 1 + s % n_obj_classes;  // round-robin keeps every class present
        shape.disc = rng.next_double() < 0.5;
        shape.half_h = static_cast<int64_t>(rng.uniform(half_lo, half_hi));
        shape.half_w = shape.disc ? shape.half_h : static_cast<int64_t>(rng.uniform(half_lo, half_hi));
        const auto place = [&rng](int64_t extent, int64_t half) {
            return extent > 2 * half ? static_cast<int64_t>(rng.uniform(static_cast<double>(half),
                                                                        static_cast<double>(extent - half)))
                                     : extent / 2;
        };
        shape.cy = place(h, shape.half_h);
        shape.cx = place(w, shape.half_w);
        const ClassStyle& st = styles[static_cast<size_t>(shape.cls)];
        shape.color[0] = std::clamp(st.r + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        shape.color[1] = std::clamp(st.g + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        shape.color[2] = std::clamp(st.b + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        shape.depth = class_depth[static_cast<size_t>(shape.cls)];
        shapes.push_back(shape);
    }
    // painter's order: far shapes first so nearer objects occlude
    std::stable_sort(shapes.begin(), shapes.end(),
                     [](const Shape& a, const Shape& b) { return a.depth > b.depth; });

    const int64_t hw = h * w;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            scene.rgb[0 * hw + y * w + x] = bg_color[0];
            scene.rgb[1 * hw + y * w + x] = bg_color[1];
            scene.rgb[2 * hw + y * w + x] = bg_color[2];
        }
    }
    for (int64_t i = 0; i < hw; ++i) scene.depth.values[static_cast<size_t>(i)] = class_depth[0];

    for (const Shape& shape : shapes) {
        for (int64_t y = shape.cy - shape.half_h; y <= shape.cy + shape.half_h; ++y) {
            for (int64_t x = shape.cx - shape.half_w; x <= shape.cx + shape.half_w; ++x) {
                if (y < 0 || y >= h || x < 0 || x >= w) continue;
                if (shape.disc) {
                    const double dy = static_cast<double>(y - shape.cy);
                    const double dx = static_cast<double>(x - shape.cx);
                    if (dy * dy + dx * dx > static_cast<double>(shape.half_h * shape.half_h)) continue;
                }
                scene.labels.set(y, x, shape.cls);
                scene.depth.set(y, x, shape.depth);
                scene.rgb[0 * hw + y * w + x] = shape.color[0];
                scene.rgb[1 * hw + y * w + x] = shape.color[1];
                scene.rgb[2 * hw + y * w + x] = shape.color[2];
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        for (int64_t i = 0; i < 3 * hw; ++i) {
            scene.rgb[i] = std::clamp(scene.rgb[i] + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0);
        }
    }
    if (spec.depth_noise_sigma > 0.0) {
        for (int64_t i = 0; i < hw; ++i) {
            double& d = scene.depth.values[static_cast<size_t>(i)];
            d = std::max(0.0, d + rng.normal(0.0, spec.depth_noise_sigma));
        }
    }
    if (spec.hole_prob > 0.0) {
        for (int64_t i = 0; i < hw; ++i) {
            if (rng.next_double() < spec.hole_prob) {
                scene.depth.valid[static_cast<size_t>(i)] = 0;
            }
        }
    }
    return scene;
}

}  // namespace

std::vector<Scene> generate(const DatasetSpec& spec) {
    spec.validate();
    const std::vector<ClassStyle> styles = class_styles(spec);
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<size_t>(spec.num_images));
    for (int i = 0; i < spec.num_images; ++i) {
        Rng img_rng(Rng(spec.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(i + 1))).next_u64());
        scenes.push_back(generate_scene(spec, styles, img_rng));
    }
    return scenes;
}

DepthPyramid DepthPyramid::build(const DepthMap& depth, int levels) {
    if (levels < 0) throw ArgumentError("pyramid levels must be >= 0");
    DepthPyramid p;
    p.levels_.push_back(std::make_shared<DepthMap>(depth));
    for (int k = 1; k <= levels; ++k) {
        const DepthMap& prev = *p.levels_.back();
        const int64_t nh = (prev.height + 1) / 2;
        const int64_t nw = (prev.width + 1) / 2;
        auto next = std::make_shared<DepthMap>(nh, nw);
        for (int64_t y = 0; y < nh; ++y) {
            for (int64_t x = 0; x < nw; ++x) {
                // top-left sample of each 2x2 block; missing-ness travels along
                next->set(y, x, prev.depth_at(2 * y, 2 * x), prev.valid_at(2 * y, 2 * x));
            }
        }
        p.levels_.push_back(std::move(next));
    }
    return p;
}

const DepthMap& DepthPyramid::level(int k) const {
    if (k < 0 || k >= levels()) throw SpecError("depth pyramid has no level " + std::to_string(k));
    return *levels_[static_cast<size_t>(k)];
}

std::shared_ptr<const DepthMap> DepthPyramid::level_ptr(int k) const {
    if (k < 0 || k >= levels()) throw SpecError("depth pyramid has no level " + std::to_string(k));
    return levels_[static_cast<size_t>(k)];
}

DepthPyramid build_pyramid(const DepthMap& depth, int levels) { return DepthPyramid::build(depth, levels); }

namespace {

long tell_offset(std::istream& in) {
    const auto pos = in.tellg();
    return pos < 0 ? -1 : static_cast<long>(pos);
}

[[noreturn]] void format_fail(const std::string& path, std::istream& in, const std::string& what) {
    throw FormatError(path + ": " + what + " at byte " + std::to_string(tell_offset(in)));
}

// PNM header token: skips whitespace and '#' comments.
std::string pnm_token(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    if (c == EOF) format_fail(path, in, "unexpected end of header");
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

int64_t pnm_int(std::istream& in, const std::string& path, const char* what) {
    const std::string tok = pnm_token(in, path);
    try {
        size_t used = 0;
        const long long v = std::stoll(tok, &used);
        if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
        return static_cast<int64_t>(v);
    } catch (const std::exception&) {
        format_fail(path, in, std::string("invalid ") + what + " '" + tok + "'");
    }
}

struct PnmHeader {
    int64_t width = 0, height = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& path, const char* magic) {
    char m[2];
    if (!in.read(m, 2) || m[0] != magic[0] || m[1] != magic[1]) {
        format_fail(path, in, std::string("expected magic ") + magic);
    }
    PnmHeader hdr;
    hdr.width = pnm_int(in, path, "width");
    hdr.height = pnm_int(in, path, "height");
    hdr.maxval = pnm_int(in, path, "maxval");
    if (hdr.width < 1 || hdr.height < 1) format_fail(path, in, "non-positive image dimensions");
    // pnm_int consumed the single whitespace after maxval
    return hdr;
}

void read_payload(std::istream& in, const std::string& path, std::vector<unsigned char>& buf) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
        format_fail(path, in, "truncated pixel payload");
    }
}

}  // namespace

void write_ppm_rgb(const std::string& path, const Tensor& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb tensor must be [3,h,w]");
    const int64_t h = rgb.dim(1), w = rgb.dim(2), hw = h * w;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(3 * hw));
    for (int64_t p = 0; p < hw; ++p) {
        for (int64_t c = 0; c < 3; ++c) {
            const double v = std::clamp(rgb[c * hw + p], 0.0, 1.0);
            buf[static_cast<size_t>(3 * p + c)] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);
}

Tensor read_ppm_rgb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    const PnmHeader hdr = read_pnm_header(in, path, "P6");
    if (hdr.maxval != 255) format_fail(path, in, "expected maxval 255");
    std::vector<unsigned char> buf(static_cast<size_t>(3 * hdr.width * hdr.height));
    read_payload(in, path, buf);
    Tensor rgb({3, hdr.height, hdr.width});
    const int64_t hw = hdr.height * hdr.width;
    for (int64_t p = 0; p < hw; ++p) {
        for (int64_t c = 0; c < 3; ++c) {
            rgb[c * hw + p] = static_cast<double>(buf[static_cast<size_t>(3 * p + c)]) / 255.0;
        }
    }
    return rgb;
}

void write_pgm16_depth(const std::string& path, const DepthMap& depth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << depth.width << " " << depth.height << "\n65535\n";
    std::vector<unsigned char> buf(static_cast<size_t>(2 * depth.height * depth.width));
    for (int64_t i = 0; i < depth.height * depth.width; ++i) {
        uint16_t mm = 0;
        if (depth.valid[static_cast<size_t>(i)]) {
            const double v = std::clamp(depth.values[static_cast<size_t>(i)] * 1000.0, 1.0, 65535.0);
            mm = static_cast<uint16_t>(std::lround(v));
        }
        buf[static_cast<size_t>(2 * i)] = static_cast<unsigned char>(mm >> 8);  // big-endian
        buf[static_cast<size_t>(2 * i + 1)] = static_cast<unsigned char>(mm & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);
}

DepthMap read_pgm16_depth(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    const PnmHeader hdr = read_pnm_header(in, path, "P5");
    if (hdr.maxval != 65535) format_fail(path, in, "expected maxval 65535");
    std::vector<unsigned char> buf(static_cast<size_t>(2 * hdr.width * hdr.height));
    read_payload(in, path, buf);
    DepthMap depth(hdr.height, hdr.width);
    for (int64_t i = 0; i < hdr.height * hdr.width; ++i) {
        const uint16_t mm = static_cast<uint16_t>(buf[static_cast<size_t>(2 * i)] << 8 |
                                                  buf[static_cast<size_t>(2 * i + 1)]);
        if (mm == 0) {
            depth.values[static_cast<size_t>(i)] = 0.0;
            depth.valid[static_cast<size_t>(i)] = 0;
        } else {
            depth.values[static_cast<size_t>(i)] = static_cast<double>(mm) / 1000.0;
        }
    }
    return depth;
}

void write_pgm8_labels(const std::string& path, const LabelMap& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << labels.width << " " << labels.height << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(labels.height * labels.width));
    for (size_t i = 0; i < buf.size(); ++i) {
        const int32_t v = labels.ids[i];
        if (v < 0 || v > 255) throw DataError("label " + std::to_string(v) + " does not fit an 8-bit map");
        buf[i] = static_cast<unsigned char>(v);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);
}

LabelMap read_pgm8_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    const PnmHeader hdr = read_pnm_header(in, path, "P5");
    if (hdr.maxval != 255) format_fail(path, in, "expected maxval 255");
    std::vector<unsigned char> buf(static_cast<size_t>(hdr.width * hdr.height));
    read_payload(in, path, buf);
    LabelMap labels(hdr.height, hdr.width);
    for (size_t i = 0; i < buf.size(); ++i) labels.ids[i] = buf[i];
    return labels;
}

namespace {

std::string index_name(int i) {
    char b[16];
    std::snprintf(b, sizeof(b), "%06d", i);
    return b;
}

}  // namespace

void write_dataset(const std::string& root, const std::vector<Scene>& scenes) {
    std::error_code ec;
    for (const char* sub : {"rgb", "depth", "label"}) {
        fs::create_directories(fs::path(root) / sub, ec);
        if (ec) throw IoError("cannot create " + (fs::path(root) / sub).string() + ": " + ec.message());
    }
    std::ofstream manifest(fs::path(root) / "manifest.txt");
    if (!manifest) throw IoError("cannot write manifest in " + root);
    for (size_t i = 0; i < scenes.size(); ++i) {
        const std::string idx = index_name(static_cast<int>(i));
        write_ppm_rgb((fs::path(root) / "rgb" / (idx + ".ppm")).string(), scenes[i].rgb);
        write_pgm16_depth((fs::path(root) / "depth" / (idx + ".pgm")).string(), scenes[i].depth);
        write_pgm8_labels((fs::path(root) / "label" / (idx + ".pgm")).string(), scenes[i].labels);
        manifest << idx << "\n";
    }
    if (!manifest) throw IoError("failed writing manifest in " + root);
}

std::vector<Scene> load_dataset(const std::string& root) {
    std::ifstream manifest(fs::path(root) / "manifest.txt");
    if (!manifest) throw IoError("cannot open manifest in " + root);
    std::vector<Scene> scenes;
    std::string idx;
    while (std::getline(manifest, idx)) {
        if (idx.empty()) continue;
        Scene s;
        s.rgb = read_ppm_rgb((fs::path(root) / "rgb" / (idx + ".ppm")).string());
        s.depth = read_pgm16_depth((fs::path(root) / "depth" / (idx + ".pgm")).string());
        s.labels = read_pgm8_labels((fs::path(root) / "label" / (idx + ".pgm")).string());
        if (s.depth.height != s.rgb.dim(1) || s.depth.width != s.rgb.dim(2) ||
            s.labels.height != s.rgb.dim(1) || s.labels.width != s.rgb.dim(2)) {
            throw DataError("scene " + idx + " has mismatched rgb/depth/label dimensions");
        }
        scenes.push_back(std::move(s));
    }
    if (scenes.empty()) throw DataError("dataset at " + root + " is empty");
    return scenes;
}

}  // namespace dacnn
