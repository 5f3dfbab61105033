#include "avseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "avseg/error.hpp"
#include "avseg/rng.hpp"
#include "avseg/serialize.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace avseg {

namespace {

constexpr const char* kShapeNames[3] = {"disk", "rect", "tri"};
constexpr const char* kColorNames[3] = {"red", "green", "blue"};
constexpr double kColors[3][3] = {{0.90, 0.18, 0.18}, {0.16, 0.82, 0.25}, {0.22, 0.38, 0.95}};

struct ObjectSpec {
    int64_t class_id = 0;  // 1..C
    int shape = 0;         // index into kShapeNames
    int color = 0;
    double cy = 0, cx = 0;      // center at frame 0
    double vy = 0, vx = 0;      // drift per frame
    double radius = 0;
    bool sounding = false;
    int64_t onset = 0;          // first sounding frame
};

bool point_inside(const ObjectSpec& o, int64_t t, double y, double x) {
    const double cy = o.cy + o.vy * static_cast<double>(t);
    const double cx = o.cx + o.vx * static_cast<double>(t);
    const double dy = y - cy, dx = x - cx;
    switch (o.shape) {
        case 0:  // disk
            return dy * dy + dx * dx <= o.radius * o.radius;
        case 1:  // rectangle
            return std::abs(dy) <= o.radius * 0.85 && std::abs(dx) <= o.radius * 0.65;
        default: {  // triangle, apex up
            const double ay = -o.radius, ax = 0.0;
            const double by = o.radius * 0.8, bx = -o.radius * 0.9;
            const double gy = o.radius * 0.8, gx = o.radius * 0.9;
            auto side = [&](double p1y, double p1x, double p2y, double p2x) {
                return (p2x - p1x) * (dy - p1y) - (p2y - p1y) * (dx - p1x);
            };
            const double s1 = side(ay, ax, by, bx), s2 = side(by, bx, gy, gx), s3 = side(gy, gx, ay, ax);
            const bool neg = s1 < 0 || s2 < 0 || s3 < 0;
            const bool pos = s1 > 0 || s2 > 0 || s3 > 0;
            return !(neg && pos);
        }
    }
}

// 3x3 supersampled coverage in [0,1]
double pixel_coverage(const ObjectSpec& o, int64_t t, int64_t py, int64_t px) {
    int hits = 0;
    for (int sy = 0; sy < 3; ++sy)
        for (int sx = 0; sx < 3; ++sx) {
            const double y = static_cast<double>(py) + (static_cast<double>(sy) + 0.5) / 3.0;
            const double x = static_cast<double>(px) + (static_cast<double>(sx) + 0.5) / 3.0;
            if (point_inside(o, t, y, x)) ++hits;
        }
    return static_cast<double>(hits) / 9.0;
}

Tensor render_background(const GeneratorConfig& cfg, Rng& rng) {
    Tensor bg({3, cfg.height, cfg.width});
    for (int c = 0; c < 3; ++c) {
        const double base = 0.12 + 0.2 * rng.uniform();
        const double a1 = 0.04 * rng.uniform(), a2 = 0.04 * rng.uniform();
        const double fy1 = rng.uniform(0.5, 2.5), fx1 = rng.uniform(0.5, 2.5);
        const double fy2 = rng.uniform(2.0, 6.0), fx2 = rng.uniform(2.0, 6.0);
        const double p1 = rng.uniform(0.0, 2.0 * M_PI), p2 = rng.uniform(0.0, 2.0 * M_PI);
        for (int64_t y = 0; y < cfg.height; ++y)
            for (int64_t x = 0; x < cfg.width; ++x) {
                const double uy = static_cast<double>(y) / static_cast<double>(cfg.height);
                const double ux = static_cast<double>(x) / static_cast<double>(cfg.width);
                double v = base + a1 * std::sin(2.0 * M_PI * (fy1 * uy + fx1 * ux) + p1) +
                           a2 * std::sin(2.0 * M_PI * (fy2 * uy + fx2 * ux) + p2);
                bg(c, y, x) = std::clamp(v, 0.0, 0.45);
            }
    }
    return bg;
}

struct SceneDraft {
    std::vector<ObjectSpec> objects;
    Tensor frames;
    IntTensor semantic;
    IntTensor binary;
    std::vector<std::vector<int>> event_log;  // per frame, sorted class ids
    bool every_frame_has_sound = false;
};

SceneDraft draft_scene(const GeneratorConfig& cfg, Rng& rng) {
    SceneDraft d;
    const int64_t T = cfg.frames, H = cfg.height, W = cfg.width;
    const int64_t n_colors = 3;

    const int64_t n_obj =
        cfg.min_objects + (cfg.max_objects > cfg.min_objects
                               ? rng.uniform_int(cfg.max_objects - cfg.min_objects + 1)
                               : 0);
    // distinct classes per scene keep the sounding-set invariant exact
    std::vector<int64_t> class_pool(static_cast<size_t>(cfg.num_classes));
    for (int64_t i = 0; i < cfg.num_classes; ++i) class_pool[static_cast<size_t>(i)] = i + 1;
    for (int64_t i = cfg.num_classes - 1; i > 0; --i)
        std::swap(class_pool[static_cast<size_t>(i)], class_pool[static_cast<size_t>(rng.uniform_int(i + 1))]);

    const double rmin = cfg.min_radius_frac * static_cast<double>(std::min(H, W));
    const double rmax = cfg.max_radius_frac * static_cast<double>(std::min(H, W));
    for (int64_t i = 0; i < n_obj; ++i) {
        ObjectSpec o;
        o.class_id = class_pool[static_cast<size_t>(i)];
        o.shape = static_cast<int>((o.class_id - 1) / n_colors);
        o.color = static_cast<int>((o.class_id - 1) % n_colors);
        o.radius = rng.uniform(rmin, rmax);
        o.cy = rng.uniform(o.radius, static_cast<double>(H) - o.radius);
        o.cx = rng.uniform(o.radius, static_cast<double>(W) - o.radius);
        o.vy = rng.uniform(-1.5, 1.5);
        o.vx = rng.uniform(-1.5, 1.5);
        o.sounding = rng.uniform() >= cfg.silent_fraction;
        d.objects.push_back(o);
    }
    // promote objects until the sounding quota is met
    int64_t n_sound = 0;
    for (const auto& o : d.objects) n_sound += o.sounding ? 1 : 0;
    const int64_t want = std::min<int64_t>(std::max<int64_t>(cfg.min_sounding, 1), n_obj);
    for (int64_t i = 0; i < n_obj && n_sound < want; ++i)
        if (!d.objects[static_cast<size_t>(i)].sounding) {
            d.objects[static_cast<size_t>(i)].sounding = true;
            ++n_sound;
        }
    if (cfg.max_sounding > 0 && n_sound > cfg.max_sounding) {
        for (int64_t i = n_obj - 1; i >= 0 && n_sound > cfg.max_sounding; --i)
            if (d.objects[static_cast<size_t>(i)].sounding) {
                d.objects[static_cast<size_t>(i)].sounding = false;
                --n_sound;
            }
    }
    bool anchored = false;  // one sounding object covers every frame
    for (auto& o : d.objects) {
        if (!o.sounding) continue;
        if (!anchored) {
            o.onset = 0;
            anchored = true;
        } else {
            o.onset = (T > 1 && rng.uniform() < cfg.onset_probability) ? 1 + rng.uniform_int(T - 1) : 0;
        }
    }

    Tensor bg = render_background(cfg, rng);
    d.frames = Tensor({T, 3, H, W});
    d.semantic = IntTensor({T, H, W});
    d.binary = IntTensor({T, H, W});
    d.event_log.assign(static_cast<size_t>(T), {});

    for (int64_t t = 0; t < T; ++t) {
        std::set<int> active;
        for (const auto& o : d.objects)
            if (o.sounding && t >= o.onset) active.insert(static_cast<int>(o.class_id));
        d.event_log[static_cast<size_t>(t)] = std::vector<int>(active.begin(), active.end());

        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double px[3] = {bg(0, y, x), bg(1, y, x), bg(2, y, x)};
                int64_t label = 0;
                for (const auto& o : d.objects) {  // later objects draw on top
                    const double a = pixel_coverage(o, t, y, x);
                    if (a > 0) {
                        for (int c = 0; c < 3; ++c) px[c] = (1.0 - a) * px[c] + a * kColors[o.color][c];
                    }
                    if (point_inside(o, t, static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5))
                        label = o.class_id;
                }
                for (int c = 0; c < 3; ++c) d.frames(t, c, y, x) = px[c];
                d.semantic(t, y, x) = static_cast<int32_t>(label);
                d.binary(t, y, x) =
                    (label != 0 && active.count(static_cast<int>(label))) ? 1 : 0;
            }
    }

    d.every_frame_has_sound = true;
    for (int64_t t = 0; t < T; ++t) {
        int64_t fg = 0;
        for (int64_t i = 0; i < H * W; ++i) fg += d.binary[t * H * W + i];
        if (fg == 0) d.every_frame_has_sound = false;
    }
    return d;
}

// BFS 4-connected distance from a source set; unreachable stays large.
std::vector<int> bfs_distance(const std::vector<uint8_t>& source, int64_t h, int64_t w) {
    std::vector<int> dist(static_cast<size_t>(h * w), 1 << 28);
    std::deque<int64_t> q;
    for (int64_t i = 0; i < h * w; ++i)
        if (source[static_cast<size_t>(i)]) {
            dist[static_cast<size_t>(i)] = 0;
            q.push_back(i);
        }
    while (!q.empty()) {
        const int64_t p = q.front();
        q.pop_front();
        const int64_t y = p / w, x = p % w;
        const int64_t ns[4] = {p - w, p + w, p - 1, p + 1};
        const bool ok[4] = {y > 0, y + 1 < h, x > 0, x + 1 < w};
        for (int k = 0; k < 4; ++k) {
            if (!ok[k]) continue;
            if (dist[static_cast<size_t>(ns[k])] > dist[static_cast<size_t>(p)] + 1) {
                dist[static_cast<size_t>(ns[k])] = dist[static_cast<size_t>(p)] + 1;
                q.push_back(ns[k]);
            }
        }
    }
    return dist;
}

}  // namespace

std::vector<std::string> class_name_table(int64_t num_classes) {
    check_config(num_classes >= 1 && num_classes <= 9, "num_classes must be in [1,9] (shape x color grid)");
    std::vector<std::string> names;
    for (int64_t c = 0; c < num_classes; ++c) {
        const int shape = static_cast<int>(c / 3);
        const int color = static_cast<int>(c % 3);
        names.push_back(std::string(kColorNames[color]) + "_" + kShapeNames[shape]);
    }
    return names;
}

Tensor audio_class_prototype(const GeneratorConfig& cfg, int64_t class_id) {
    Rng rng(hash_mix(cfg.proto_seed, static_cast<uint64_t>(class_id)));
    Tensor p = rng.normal_tensor({cfg.audio_dim});
    double nrm = 0;
    for (int64_t i = 0; i < p.numel(); ++i) nrm += p[i] * p[i];
    nrm = std::sqrt(nrm);
    for (int64_t i = 0; i < p.numel(); ++i) p[i] /= nrm;
    return p;
}

GeneratedScene gen_scene_with_log(const GeneratorConfig& cfg, uint64_t seed) {
    check_config(cfg.height % 32 == 0 && cfg.width % 32 == 0, "height and width must be divisible by 32");
    check_config(cfg.frames >= 1 && cfg.audio_dim >= 1, "frames and audio_dim must be positive");
    check_config(cfg.min_objects >= 1 && cfg.max_objects >= cfg.min_objects, "bad object count range");
    check_config(cfg.num_classes >= cfg.max_objects, "need num_classes >= max_objects for distinct classes");
    check_config(cfg.max_sounding == 0 || cfg.max_sounding >= cfg.min_sounding,
                 "max_sounding must be 0 or >= min_sounding");
    class_name_table(cfg.num_classes);  // validates the class range

    SceneDraft d;
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(hash_mix(seed, 0x5CE9E5ULL + static_cast<uint64_t>(attempt)));
        d = draft_scene(cfg, rng);
        if (d.every_frame_has_sound) break;
        check_config(attempt < 99, "could not place a visibly sounding object (config too crowded)");
    }

    GeneratedScene g;
    g.event_log = std::move(d.event_log);
    SceneSample& s = g.sample;
    s.semantic_mask = std::move(d.semantic);
    s.binary_mask = std::move(d.binary);
    s.frames = round_to_f32(d.frames);

    Tensor audio({cfg.frames, cfg.audio_dim});
    Rng arng(hash_mix(seed, 0xA0D10ULL));
    for (int64_t t = 0; t < cfg.frames; ++t) {
        for (int c : g.event_log[static_cast<size_t>(t)]) {
            Tensor p = audio_class_prototype(cfg, c);
            for (int64_t i = 0; i < cfg.audio_dim; ++i) audio(t, i) += p[i];
        }
        for (int64_t i = 0; i < cfg.audio_dim; ++i) audio(t, i) += cfg.audio_noise * arng.normal();
    }
    s.audio = round_to_f32(audio);
    s.clip_id = "clip";  // caller assigns real ids
    return g;
}

SceneSample gen_scene(const GeneratorConfig& cfg, uint64_t seed) {
    return gen_scene_with_log(cfg, seed).sample;
}

Tensor corrupt_mask(const IntTensor& mask, double target_iou, uint64_t seed) {
    check_config(target_iou > 0.0 && target_iou <= 1.0, "target_iou must be in (0,1]");
    check_shape(mask.rank() == 3, "corrupt_mask expects [T,H,W]");
    const int64_t T = mask.dim(0), H = mask.dim(1), W = mask.dim(2);

    Tensor out({T, H, W});
    if (target_iou == 1.0) {
        for (int64_t i = 0; i < mask.numel(); ++i) out[i] = static_cast<double>(mask[i]);
        return out;
    }

    for (int64_t t = 0; t < T; ++t) {
        const int32_t* m = mask.data() + t * H * W;
        std::vector<uint8_t> fg(static_cast<size_t>(H * W)), bgm(static_cast<size_t>(H * W));
        int64_t F = 0;
        for (int64_t i = 0; i < H * W; ++i) {
            fg[static_cast<size_t>(i)] = m[i] ? 1 : 0;
            bgm[static_cast<size_t>(i)] = m[i] ? 0 : 1;
            F += m[i] ? 1 : 0;
        }
        check_config(F >= 1, "corrupt_mask needs >=1 foreground pixel per frame");

        auto dist_to_fg = bfs_distance(fg, H, W);
        auto dist_to_bg = bfs_distance(bgm, H, W);

        Rng rng(hash_mix(seed, static_cast<uint64_t>(t) * 0x9E37ULL + 17));
        // a few blob centers in the background seed false positives
        std::vector<uint8_t> blob_src(static_cast<size_t>(H * W), 0);
        const int64_t n_blobs = 1 + rng.uniform_int(3);
        for (int64_t b = 0; b < n_blobs; ++b) {
            for (int tries = 0; tries < 50; ++tries) {
                const int64_t p = rng.uniform_int(H * W);
                if (!fg[static_cast<size_t>(p)] && dist_to_fg[static_cast<size_t>(p)] >= 4) {
                    blob_src[static_cast<size_t>(p)] = 1;
                    break;
                }
            }
        }
        auto dist_to_blob = bfs_distance(blob_src, H, W);

        struct Cand {
            double priority;
            int64_t pixel;
        };
        std::vector<Cand> cands;
        cands.reserve(static_cast<size_t>(H * W));
        for (int64_t i = 0; i < H * W; ++i) {
            const double jitter = 1.5 * rng.uniform();
            double dd;
            if (fg[static_cast<size_t>(i)]) {
                dd = static_cast<double>(dist_to_bg[static_cast<size_t>(i)]);
            } else {
                dd = static_cast<double>(std::min(dist_to_fg[static_cast<size_t>(i)],
                                                  dist_to_blob[static_cast<size_t>(i)] + 1));
            }
            cands.push_back({dd + jitter, i});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.priority != b.priority ? a.priority < b.priority : a.pixel < b.pixel;
        });

        // flipping an fg pixel shrinks the intersection, flipping a bg pixel
        // grows the union; walk until IoU crosses the target
        int64_t erosions = 0, additions = 0;
        size_t k = 0;
        double best_diff = std::abs(1.0 - target_iou);
        size_t best_k = 0;
        for (; k < cands.size(); ++k) {
            const int64_t p = cands[k].pixel;
            if (fg[static_cast<size_t>(p)]) {
                if (erosions + 1 >= F) break;  // keep at least one true pixel
                ++erosions;
            } else {
                ++additions;
            }
            const double iou =
                static_cast<double>(F - erosions) / static_cast<double>(F + additions);
            const double diff = std::abs(iou - target_iou);
            if (diff < best_diff) {
                best_diff = diff;
                best_k = k + 1;
            }
            if (iou < target_iou) break;
        }

        std::vector<uint8_t> corrupted(fg);
        for (size_t i = 0; i < best_k; ++i) {
            const int64_t p = cands[i].pixel;
            corrupted[static_cast<size_t>(p)] ^= 1;
        }

        // soft values from the signed BFS distance of the corrupted mask
        std::vector<uint8_t> inv(corrupted.size());
        for (size_t i = 0; i < corrupted.size(); ++i) inv[i] = corrupted[i] ? 0 : 1;
        auto dc_in = bfs_distance(inv, H, W);        // distance to background, >0 inside
        auto dc_out = bfs_distance(corrupted, H, W); // distance to foreground, >0 outside
        const double width_px = 0.75, cap = 6.0;
        for (int64_t i = 0; i < H * W; ++i) {
            const double sd = corrupted[static_cast<size_t>(i)]
                                  ? std::min(static_cast<double>(dc_in[static_cast<size_t>(i)]), cap)
                                  : -std::min(static_cast<double>(dc_out[static_cast<size_t>(i)]), cap);
            out[t * H * W + i] = 1.0 / (1.0 + std::exp(-sd / width_px));
        }
    }
    return out;
}

const SceneSample& Dataset::by_id(const std::string& clip_id) const {
    for (size_t i = 0; i < manifest.clip_ids.size(); ++i)
        if (manifest.clip_ids[i] == clip_id) return samples[i];
    throw DataError("unknown clip id: " + clip_id);
}

Dataset generate_dataset(const GeneratorConfig& cfg, int64_t clips, uint64_t seed, const std::string& split) {
    check_config(clips >= 1, "dataset needs at least one clip");
    Dataset ds;
    ds.manifest.split = split;
    ds.manifest.num_clips = clips;
    ds.manifest.frames = cfg.frames;
    ds.manifest.height = cfg.height;
    ds.manifest.width = cfg.width;
    ds.manifest.audio_dim = cfg.audio_dim;
    ds.manifest.num_classes = cfg.num_classes;
    ds.manifest.class_names = class_name_table(cfg.num_classes);
    const uint64_t split_seed = hash_mix(seed, hash_str(split));
    for (int64_t i = 0; i < clips; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "clip_%06lld", static_cast<long long>(i));
        GeneratedScene g = gen_scene_with_log(cfg, hash_mix(split_seed, static_cast<uint64_t>(i)));
        g.sample.clip_id = buf;
        ds.manifest.sounding_event_log[g.sample.clip_id] = std::move(g.event_log);
        ds.manifest.clip_ids.push_back(g.sample.clip_id);
        ds.samples.push_back(std::move(g.sample));
    }
    return ds;
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["split"] = m.split;
    j["num_clips"] = m.num_clips;
    j["frames"] = m.frames;
    j["height"] = m.height;
    j["width"] = m.width;
    j["audio_dim"] = m.audio_dim;
    j["num_classes"] = m.num_classes;
    j["class_names"] = m.class_names;
    j["clips"] = m.clip_ids;
    json log = json::object();
    for (const auto& [clip, frames] : m.sounding_event_log) log[clip] = frames;
    j["sounding_event_log"] = log;
    return j;
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.split = j.at("split").get<std::string>();
    m.num_clips = j.at("num_clips").get<int64_t>();
    m.frames = j.at("frames").get<int64_t>();
    m.height = j.at("height").get<int64_t>();
    m.width = j.at("width").get<int64_t>();
    m.audio_dim = j.at("audio_dim").get<int64_t>();
    m.num_classes = j.at("num_classes").get<int64_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.clip_ids = j.at("clips").get<std::vector<std::string>>();
    for (const auto& [clip, frames] : j.at("sounding_event_log").items())
        m.sounding_event_log[clip] = frames.get<std::vector<std::vector<int>>>();
    return m;
}

void validate_against_manifest(const SceneSample& s, const DatasetManifest& m) {
    const Shape want_frames = {m.frames, 3, m.height, m.width};
    const Shape want_mask = {m.frames, m.height, m.width};
    check_data(s.frames.shape() == want_frames, s.clip_id + ": frames shape mismatch");
    check_data(s.audio.shape() == Shape({m.frames, m.audio_dim}), s.clip_id + ": audio shape mismatch");
    check_data(s.semantic_mask.shape() == want_mask, s.clip_id + ": semantic shape mismatch");
    check_data(s.binary_mask.shape() == want_mask, s.clip_id + ": binary shape mismatch");
    auto log_it = m.sounding_event_log.find(s.clip_id);
    check_data(log_it != m.sounding_event_log.end(), "event log missing clip " + s.clip_id);
    check_data(static_cast<int64_t>(log_it->second.size()) == m.frames,
               "event log frame count mismatch for " + s.clip_id);
    for (int64_t t = 0; t < m.frames; ++t) {
        const std::set<int> active(log_it->second[static_cast<size_t>(t)].begin(),
                                   log_it->second[static_cast<size_t>(t)].end());
        for (int64_t p = 0; p < m.height * m.width; ++p) {
            const int32_t sem = s.semantic_mask[t * m.height * m.width + p];
            const int32_t bin = s.binary_mask[t * m.height * m.width + p];
            check_data(sem >= 0 && sem <= m.num_classes,
                       s.clip_id + ": semantic label " + std::to_string(sem) + " exceeds num_classes " +
                           std::to_string(m.num_classes));
            check_data(bin == 0 || bin == 1, s.clip_id + ": binary mask entry not 0/1");
            const bool should_sound = sem != 0 && active.count(sem) > 0;
            check_data((bin == 1) == should_sound, s.clip_id + ": binary mask inconsistent with event log");
        }
    }
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "manifest.json");
        check_data(os.is_open(), "cannot write manifest in " + dir.string());
        os << manifest_to_json(dataset.manifest).dump(2) << "\n";
    }
    for (const auto& s : dataset.samples) {
        const fs::path cd = dir / s.clip_id;
        fs::create_directories(cd);
        write_tensor_file(cd / "frames.bin", s.frames, Dtype::F32);
        write_tensor_file(cd / "audio.bin", s.audio, Dtype::F32);
        write_tensor_file(cd / "semantic.bin", s.semantic_mask, Dtype::U8);
        write_tensor_file(cd / "binary.bin", s.binary_mask, Dtype::U8);
    }
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    check_data(is.is_open(), "no manifest.json in " + dir.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("manifest parse error in " + dir.string() + ": " + e.what());
    }
    Dataset ds;
    ds.manifest = manifest_from_json(j);
    check_data(static_cast<int64_t>(ds.manifest.clip_ids.size()) == ds.manifest.num_clips,
               "manifest clip list does not match num_clips");
    for (const auto& clip : ds.manifest.clip_ids) {
        const fs::path cd = dir / clip;
        SceneSample s;
        s.clip_id = clip;
        s.frames = read_tensor_file(cd / "frames.bin");
        s.audio = read_tensor_file(cd / "audio.bin");
        s.semantic_mask = read_int_tensor_file(cd / "semantic.bin");
        s.binary_mask = read_int_tensor_file(cd / "binary.bin");
        validate_against_manifest(s, ds.manifest);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace avseg
