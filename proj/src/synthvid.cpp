#include "weaksurg/synthvid.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "weaksurg/png_io.hpp"
#include "weaksurg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace weaksurg::synthvid {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0, y = 0;
};

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double abx = bx - ax, aby = by - ay;
  const double len2 = abx * abx + aby * aby;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * abx + (py - ay) * aby) / len2, 0.0, 1.0);
  const double cx = ax + t * abx, cy = ay + t * aby;
  return std::hypot(px - cx, py - cy);
}

bool tip_contains(int kind, double lx, double ly, double ts) {
  const double h = ts / 2.0;
  switch (kind % 7) {
    case 0:  // triangle pointing forward
      return lx >= -h && lx <= h && std::abs(ly) <= (h - lx) * 0.5;
    case 1:  // disc
      return lx * lx + ly * ly <= h * h;
    case 2:  // square
      return std::abs(lx) <= h && std::abs(ly) <= h;
    case 3:  // diamond
      return std::abs(lx) + std::abs(ly) <= h;
    case 4:  // plus
      return (std::abs(lx) <= ts / 6.0 && std::abs(ly) <= h) ||
             (std::abs(ly) <= ts / 6.0 && std::abs(lx) <= h);
    case 5: {  // two prongs joined by a base bar
      const bool prong = std::abs(lx) <= h && std::abs(std::abs(ly) - ts / 3.0) <= ts / 6.0;
      const bool base = lx >= -h && lx <= -h / 2.0 && std::abs(ly) <= h;
      return prong || base;
    }
    default: {  // ring
      const double r2 = lx * lx + ly * ly;
      const double inner = ts / 5.0;
      return r2 <= h * h && r2 >= inner * inner;
    }
  }
}

struct ObjectState {
  ObjectSpec spec;
  double x, y, angle, omega;
  double vx, vy;
  double body_hue, body_val, tip_hue, tip_val;
  double y_lo, y_hi, x_lo, x_hi;  // center motion limits

  explicit ObjectState(const ObjectSpec& s, int image_size) : spec(s) {
    x = s.x;
    y = s.y;
    angle = s.angle;
    omega = s.omega;
    vx = s.vx;
    vy = s.vy;
    body_hue = s.body_hue;
    body_val = s.body_val;
    tip_hue = s.tip_hue;
    tip_val = s.tip_val;
    const double extent = s.length / 2.0 + s.tip_size * 0.75 + 2.0;
    x_lo = extent;
    x_hi = image_size - extent;
    if (x_lo > x_hi) x_lo = x_hi = image_size / 2.0;
    double b0 = s.band_y0, b1 = s.band_y1;
    if (b1 <= b0) {
      b0 = 0;
      b1 = image_size;
    }
    const double vext = std::max(s.width, s.tip_size) / 2.0 +
                        std::abs(std::sin(0.4)) * extent + 1.0;
    y_lo = b0 + vext;
    y_hi = b1 - vext;
    if (y_lo > y_hi) y_lo = y_hi = (b0 + b1) / 2.0;
  }

  void step() {
    x += vx;
    if (x < x_lo) { x = 2 * x_lo - x; vx = -vx; }
    if (x > x_hi) { x = 2 * x_hi - x; vx = -vx; }
    y += vy;
    if (y < y_lo) { y = 2 * y_lo - y; vy = -vy; }
    if (y > y_hi) { y = 2 * y_hi - y; vy = -vy; }
    angle += omega;
    if (std::abs(angle - spec.angle) > 0.35) omega = -omega;
  }

  void drift(Rng& rng) {
    const double r = spec.drift_rate;
    body_hue = std::clamp(body_hue + gaussian(rng) * r * 4.0, spec.body_hue - 25.0,
                          spec.body_hue + 25.0);
    tip_hue = std::clamp(tip_hue + gaussian(rng) * r * 2.5, spec.tip_hue - 12.0,
                         spec.tip_hue + 12.0);
    body_val = std::clamp(body_val + gaussian(rng) * r * 0.02, spec.body_val - 0.10,
                          spec.body_val + 0.10);
    tip_val = std::clamp(tip_val + gaussian(rng) * r * 0.015, spec.tip_val - 0.08,
                         spec.tip_val + 0.08);
  }

  // 0 = outside, 1 = body, 2 = tip; (lx, ly) returned for shading
  int contains(double px, double py, double& lx_out) const {
    const double u_x = std::cos(angle), u_y = std::sin(angle);
    const double dx = px - x, dy = py - y;
    const double half = std::max(spec.length / 2.0 - spec.width / 2.0, 0.0);
    // tip first so it owns the overlap region
    const double hx = x + u_x * (spec.length / 2.0 + spec.tip_size * 0.25);
    const double hy = y + u_y * (spec.length / 2.0 + spec.tip_size * 0.25);
    const double tlx = (px - hx) * u_x + (py - hy) * u_y;
    const double tly = -(px - hx) * u_y + (py - hy) * u_x;
    if (spec.tip_size > 0 && tip_contains(spec.shape_kind, tlx, tly, spec.tip_size)) {
      lx_out = tlx;
      return 2;
    }
    if (spec.length > 0 && spec.width > 0) {
      const double ax = x - u_x * half, ay = y - u_y * half;
      const double bx = x + u_x * half, by = y + u_y * half;
      if (dist_to_segment(px, py, ax, ay, bx, by) <= spec.width / 2.0) {
        lx_out = dx * u_x + dy * u_y;
        return 1;
      }
    }
    return 0;
  }
};

double hash01(std::uint64_t seed, int x, int y) {
  std::uint64_t h = seed ^ (static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL) ^
                    (static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4fULL);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

std::uint8_t to_u8(double v01) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
}

std::string frame_name(int f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", f);
  return buf;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_io(in.good(), "missing file: ", path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  return fnv1a64(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
}

Clip generate_clip(const ClipSpec& spec) {
  check_config(spec.num_frames > 0, "clip spec: num_frames must be positive");
  check_config(spec.image_size > 0, "clip spec: image_size must be positive");
  check_config(spec.num_classes > 0, "clip spec: num_classes must be positive");
  for (const auto& o : spec.objects)
    check_config(o.class_id >= 0 && o.class_id < spec.num_classes,
                 "clip spec: class_id ", o.class_id, " out of range [0,", spec.num_classes, ")");

  const int S = spec.image_size;
  Rng rng(spec.seed);
  const double bg_hue = 12.0 + uniform(rng) * 18.0;
  const double bg_phase_x = uniform(rng) * 2.0 * kPi;
  const double bg_phase_y = uniform(rng) * 2.0 * kPi;
  const std::uint64_t noise_seed = rng();

  std::vector<ObjectState> objects;
  objects.reserve(spec.objects.size());
  for (const auto& o : spec.objects) objects.emplace_back(o, S);

  Clip clip;
  clip.image_size = S;
  clip.num_classes = spec.num_classes;
  for (const auto& o : spec.objects) clip.instance_class.push_back(o.class_id);

  for (int f = 0; f < spec.num_frames; ++f) {
    if (f > 0)
      for (auto& o : objects) {
        o.step();
        o.drift(rng);
      }

    ImageU8 frame(S, S);
    MaskU16 owner(S, S);
    const double bg_shift = 0.03 * f;
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        // background: slow two-axis gradient plus static value noise
        double v = 0.22 + 0.10 * std::sin(2.0 * kPi * px / S + bg_phase_x + bg_shift) +
                   0.08 * std::sin(2.0 * kPi * py / S + bg_phase_y);
        v += 0.06 * (hash01(noise_seed, x, y) - 0.5);
        double r, g, b;
        hsv_to_rgb(bg_hue, 0.45, std::clamp(v, 0.05, 0.5), r, g, b);

        int own = 0;
        for (std::size_t i = 0; i < objects.size(); ++i) {
          double lx = 0;
          const int part = objects[i].contains(px, py, lx);
          if (part == 0) continue;
          own = static_cast<int>(i) + 1;
          const ObjectState& o = objects[i];
          if (part == 1) {
            const double shade = 0.92 + 0.08 * std::sin(2.0 * kPi * lx / 9.0);
            hsv_to_rgb(o.body_hue, o.spec.body_sat, std::clamp(o.body_val * shade, 0.0, 1.0),
                       r, g, b);
          } else {
            hsv_to_rgb(o.tip_hue, o.spec.tip_sat, o.tip_val, r, g, b);
          }
        }
        owner.at(x, y) = static_cast<std::uint16_t>(own);
        frame.at(x, y, 0) = to_u8(r);
        frame.at(x, y, 1) = to_u8(g);
        frame.at(x, y, 2) = to_u8(b);
      }
    }

    std::vector<int> pres(spec.num_classes, 0);
    for (int i = 0; i < static_cast<int>(objects.size()); ++i) {
      bool visible = false;
      for (auto v : owner.data)
        if (v == i + 1) {
          visible = true;
          break;
        }
      if (visible) pres[objects[i].spec.class_id] = 1;
    }
    clip.frames.push_back(std::move(frame));
    clip.gt_masks.push_back(std::move(owner));
    clip.presence.push_back(std::move(pres));
  }
  for (const auto& m : clip.gt_masks)
    clip.gt_instances.push_back(instances_from_id_mask(m, clip.instance_class));
  return clip;
}

ClipSpec random_clip_spec(std::uint64_t seed, int image_size, int num_classes,
                          int num_frames, int num_objects, double drift_rate,
                          double body_tint) {
  check_config(num_objects >= 0 && num_objects <= num_classes,
               "random_clip_spec: need num_objects <= num_classes for distinct classes");
  ClipSpec spec;
  spec.seed = seed;
  spec.num_frames = num_frames;
  spec.image_size = image_size;
  spec.num_classes = num_classes;

  Rng rng(derive_seed(seed, 0xC11Full));
  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  for (int i = num_classes - 1; i > 0; --i)
    std::swap(classes[i], classes[uniform_int(rng, 0, i)]);

  const double unit = image_size / 64.0;
  const double band_h = (image_size - 4.0) / std::max(num_objects, 1);
  for (int i = 0; i < num_objects; ++i) {
    ObjectSpec o;
    o.class_id = classes[i];
    o.shape_kind = o.class_id % 7;
    o.length = uniform(rng, 26, 34) * unit;
    o.width = uniform(rng, 7, 10) * unit;
    o.tip_size = uniform(rng, 9, 12) * unit;
    o.band_y0 = 2.0 + i * band_h;
    o.band_y1 = 2.0 + (i + 1) * band_h;
    o.y = (o.band_y0 + o.band_y1) / 2.0 + uniform(rng, -2, 2) * unit;
    const double extent = o.length / 2.0 + o.tip_size * 0.75 + 2.0;
    o.x = uniform(rng, extent, image_size - extent);
    o.angle = uniform(rng, -0.25, 0.25) + (uniform(rng) < 0.5 ? kPi : 0.0);
    o.vx = uniform(rng, 0.8, 2.2) * unit * (uniform(rng) < 0.5 ? -1 : 1);
    o.vy = uniform(rng, 0.2, 0.7) * unit * (uniform(rng) < 0.5 ? -1 : 1);
    o.omega = uniform(rng, 0.008, 0.03) * (uniform(rng) < 0.5 ? -1 : 1);
    o.drift_rate = drift_rate * uniform(rng, 0.6, 1.4);
    // class-coded tip hue; body hue mostly shared steel tone with a faint class tint
    const double class_hue = 360.0 * o.class_id / num_classes;
    o.tip_hue = class_hue + uniform(rng, -8, 8);
    o.tip_sat = 0.92;
    o.tip_val = 0.92;
    const double steel = 205.0 + uniform(rng, -12, 12);
    double dh = class_hue - steel;
    dh -= 360.0 * std::floor((dh + 180.0) / 360.0);  // wrap to (-180, 180]
    o.body_hue = steel + body_tint * dh;
    o.body_sat = 0.30 + uniform(rng, -0.05, 0.05);
    o.body_val = 0.78 + uniform(rng, -0.05, 0.05);
    spec.objects.push_back(o);
  }
  return spec;
}

std::vector<const DatasetClip*> Dataset::split_clips(const std::string& split) const {
  std::vector<const DatasetClip*> out;
  for (const auto& c : clips)
    if (c.split == split) out.push_back(&c);
  return out;
}

Dataset make_dataset(std::uint64_t seed, int num_clips, int num_frames, int num_classes,
                     int image_size, int num_objects, int val_clips, double drift_rate,
                     double body_tint, int num_workers) {
  check_config(num_clips > 0, "make_dataset: need at least one clip");
  check_config(val_clips >= 0 && val_clips < num_clips, "make_dataset: val_clips out of range");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.image_size = image_size;
  for (int c = 0; c < num_classes; ++c) ds.class_names.push_back(strcat("class_", c));
  ds.clips.resize(num_clips);

  auto build = [&](int i) {
    DatasetClip dc;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%04d", i);
    dc.id = buf;
    dc.split = (i < num_clips - val_clips) ? "train" : "val";
    dc.clip = generate_clip(
        random_clip_spec(derive_seed(seed, static_cast<std::uint64_t>(i)), image_size,
                         num_classes, num_frames, num_objects, drift_rate, body_tint));
    ds.clips[i] = std::move(dc);
  };

  const int workers = std::max(1, num_workers);
  if (workers == 1) {
    for (int i = 0; i < num_clips; ++i) build(i);
  } else {
    std::vector<std::future<void>> pending;
    for (int i = 0; i < num_clips; ++i) {
      pending.push_back(std::async(std::launch::async, build, i));
      if (static_cast<int>(pending.size()) >= workers) {
        pending.front().get();
        pending.erase(pending.begin());
      }
    }
    for (auto& f : pending) f.get();
  }
  return ds;
}

std::string write_dataset(const Dataset& dataset, const std::string& root) {
  std::error_code ec;
  fs::create_directories(fs::path(root) / "clips", ec);
  check_io(!ec, "cannot create dataset root: ", root);

  json meta;
  meta["format_version"] = 1;
  meta["num_classes"] = dataset.num_classes;
  meta["image_size"] = dataset.image_size;
  meta["class_names"] = dataset.class_names;
  meta["clips"] = json::array();

  for (const auto& dc : dataset.clips) {
    const fs::path cdir = fs::path(root) / "clips" / dc.id;
    fs::create_directories(cdir / "frames");
    fs::create_directories(cdir / "masks");

    json checks = json::object();
    for (std::size_t f = 0; f < dc.clip.frames.size(); ++f) {
      const std::string rel = "frames/" + frame_name(static_cast<int>(f));
      const std::string path = (cdir / rel).string();
      write_png_rgb8(path, dc.clip.frames[f]);
      checks[rel] = strcat(hash_file(path));
      const std::string mrel = "masks/" + frame_name(static_cast<int>(f));
      const std::string mpath = (cdir / mrel).string();
      write_png_gray16(mpath, dc.clip.gt_masks[f]);
      checks[mrel] = strcat(hash_file(mpath));
    }
    {
      json labels = json::array();
      for (const auto& p : dc.clip.presence) labels.push_back(p);
      std::ofstream out(cdir / "labels.json");
      out << labels.dump(0) << "\n";
    }
    checks["labels.json"] = strcat(hash_file((cdir / "labels.json").string()));

    json jc;
    jc["id"] = dc.id;
    jc["split"] = dc.split;
    jc["num_frames"] = dc.clip.frames.size();
    json table = json::object();
    for (std::size_t i = 0; i < dc.clip.instance_class.size(); ++i)
      table[strcat(i + 1)] = dc.clip.instance_class[i];
    jc["instance_classes"] = table;
    jc["checksums"] = checks;
    meta["clips"].push_back(jc);
  }

  const std::string text = meta.dump(2) + "\n";
  std::ofstream out(fs::path(root) / "meta.json");
  check_io(out.good(), "cannot write manifest: ", (fs::path(root) / "meta.json").string());
  out << text;
  return text;
}

Dataset read_dataset(const std::string& root) {
  const std::string meta_path = (fs::path(root) / "meta.json").string();
  std::ifstream in(meta_path);
  check_io(in.good(), "missing file: ", meta_path);
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw IoError(strcat("malformed manifest: ", meta_path, " (", e.what(), ")"));
  }

  Dataset ds;
  ds.num_classes = meta.at("num_classes").get<int>();
  ds.image_size = meta.at("image_size").get<int>();
  ds.class_names = meta.at("class_names").get<std::vector<std::string>>();

  for (const auto& jc : meta.at("clips")) {
    DatasetClip dc;
    dc.id = jc.at("id").get<std::string>();
    dc.split = jc.value("split", "train");
    const int frames = jc.at("num_frames").get<int>();
    const fs::path cdir = fs::path(root) / "clips" / dc.id;
    const json& checks = jc.contains("checksums") ? jc.at("checksums") : json::object();

    auto verify = [&](const std::string& rel) {
      const std::string path = (cdir / rel).string();
      check_io(fs::exists(path), "missing file: ", path);
      if (checks.contains(rel)) {
        const std::string want = checks.at(rel).get<std::string>();
        check_io(strcat(hash_file(path)) == want, "checksum mismatch: ", path);
      }
      return path;
    };

    dc.clip.image_size = ds.image_size;
    dc.clip.num_classes = ds.num_classes;
    const json& table = jc.at("instance_classes");
    int max_id = 0;
    for (auto it = table.begin(); it != table.end(); ++it)
      max_id = std::max(max_id, std::stoi(it.key()));
    dc.clip.instance_class.assign(max_id, 0);
    for (auto it = table.begin(); it != table.end(); ++it)
      dc.clip.instance_class[std::stoi(it.key()) - 1] = it.value().get<int>();

    const std::string labels_path = verify("labels.json");
    json labels;
    try {
      std::ifstream lin(labels_path);
      lin >> labels;
    } catch (const json::exception& e) {
      throw IoError(strcat("malformed label file: ", labels_path, " (", e.what(), ")"));
    }
    check_io(labels.is_array() && static_cast<int>(labels.size()) == frames,
             "malformed label file: ", labels_path, " (expected ", frames, " frames)");
    for (const auto& row : labels) {
      check_io(row.is_array() && static_cast<int>(row.size()) == ds.num_classes,
               "malformed label file: ", labels_path, " (presence vector length)");
      dc.clip.presence.push_back(row.get<std::vector<int>>());
    }

    for (int f = 0; f < frames; ++f) {
      dc.clip.frames.push_back(read_png_rgb8(verify("frames/" + frame_name(f))));
      dc.clip.gt_masks.push_back(read_png_gray16(verify("masks/" + frame_name(f))));
    }
    for (const auto& m : dc.clip.gt_masks)
      dc.clip.gt_instances.push_back(instances_from_id_mask(m, dc.clip.instance_class));
    ds.clips.push_back(std::move(dc));
  }
  return ds;
}

}  // namespace weaksurg::synthvid
