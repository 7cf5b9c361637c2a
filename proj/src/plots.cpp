#include "weaksurg/plots.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "weaksurg/png_io.hpp"
#include "weaksurg/pseudomask.hpp"

namespace fs = std::filesystem;

namespace weaksurg::plots {

namespace {

void class_color(int class_id, int num_classes, double& r, double& g, double& b) {
  hsv_to_rgb(360.0 * class_id / std::max(num_classes, 1), 0.85, 0.95, r, g, b);
}

void heat_color(double v, double& r, double& g, double& b) {
  // dark blue -> cyan -> yellow -> red
  r = std::clamp(1.5 * v - 0.25, 0.0, 1.0);
  g = std::clamp(1.8 * v * (1.0 - 0.6 * v) + 0.1 * v, 0.0, 1.0);
  b = std::clamp(1.0 - 1.6 * v, 0.05, 1.0) * (v < 0.8 ? 1.0 : 1.0 - (v - 0.8) * 3.0);
  b = std::clamp(b, 0.0, 1.0);
}

void blit(ImageU8& dst, const ImageU8& tile, int x0) {
  for (int y = 0; y < tile.height; ++y)
    for (int x = 0; x < tile.width; ++x)
      for (int c = 0; c < 3; ++c) dst.at(x0 + x, y, c) = tile.at(x, y, c);
}

}  // namespace

ImageU8 render_panel(const ImageU8& frame, const enc::CamStack& cam, const LabelMap& seed,
                     const InstanceSet& instances, int num_classes) {
  const int s = frame.width;
  const int gap = 2;
  const int tiles = 1 + num_classes + 2;
  ImageU8 panel(tiles * s + (tiles - 1) * gap, s);
  std::fill(panel.data.begin(), panel.data.end(), std::uint8_t{32});

  int at = 0;
  blit(panel, frame, at);
  at += s + gap;

  // per-class CAM over a dimmed grayscale frame
  for (int c = 0; c < num_classes; ++c) {
    ImageU8 tile(s, s);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double gray =
            (frame.at(x, y, 0) + frame.at(x, y, 1) + frame.at(x, y, 2)) / (3.0 * 255.0);
        const double v = cam.upsampled[c](y, x);
        double hr, hg, hb;
        heat_color(v, hr, hg, hb);
        const double a = 0.25 + 0.75 * v;
        tile.at(x, y, 0) = static_cast<std::uint8_t>(255 * std::clamp(gray * (1 - a) + hr * a, 0.0, 1.0));
        tile.at(x, y, 1) = static_cast<std::uint8_t>(255 * std::clamp(gray * (1 - a) + hg * a, 0.0, 1.0));
        tile.at(x, y, 2) = static_cast<std::uint8_t>(255 * std::clamp(gray * (1 - a) + hb * a, 0.0, 1.0));
      }
    }
    blit(panel, tile, at);
    at += s + gap;
  }

  {  // seed classes
    ImageU8 tile(s, s);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const int cls = seed.at(x, y);
        double r = 0.08, g = 0.08, b = 0.08;
        if (cls > 0) class_color(cls - 1, num_classes, r, g, b);
        tile.at(x, y, 0) = static_cast<std::uint8_t>(255 * r);
        tile.at(x, y, 1) = static_cast<std::uint8_t>(255 * g);
        tile.at(x, y, 2) = static_cast<std::uint8_t>(255 * b);
      }
    blit(panel, tile, at);
    at += s + gap;
  }

  {  // instances, golden-angle hues
    ImageU8 tile(s, s);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        tile.at(x, y, 0) = tile.at(x, y, 1) = tile.at(x, y, 2) = 20;
      }
    for (std::size_t i = 0; i < instances.size(); ++i) {
      double r, g, b;
      hsv_to_rgb(std::fmod(137.5 * (i + 1), 360.0), 0.8, 0.95, r, g, b);
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          if (instances[i].mask.at(x, y)) {
            tile.at(x, y, 0) = static_cast<std::uint8_t>(255 * r);
            tile.at(x, y, 1) = static_cast<std::uint8_t>(255 * g);
            tile.at(x, y, 2) = static_cast<std::uint8_t>(255 * b);
          }
    }
    blit(panel, tile, at);
  }
  return panel;
}

int export_plots(enc::Encoder& encoder, const synthvid::Dataset& data,
                 const trainer::TrainConfig& cfg, const std::string& out_dir,
                 const std::string& split, const std::string& clip_id, int max_frames) {
  std::vector<const synthvid::DatasetClip*> clips;
  if (!clip_id.empty()) {
    for (const auto& c : data.clips)
      if (c.id == clip_id) clips.push_back(&c);
    check_config(!clips.empty(), "export_plots: clip '", clip_id, "' not found");
  } else {
    clips = data.split_clips(split);
    check_config(!clips.empty(), "export_plots: split '", split, "' is empty");
  }

  int panels = 0;
  for (const auto* entry : clips) {
    const fs::path dir = fs::path(out_dir) / entry->id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    check_io(!ec, "cannot create plot directory: ", dir.string());
    const int limit = max_frames > 0
                          ? std::min<int>(max_frames, static_cast<int>(entry->clip.frames.size()))
                          : static_cast<int>(entry->clip.frames.size());
    for (int f = 0; f < limit; ++f) {
      nn::Graph g(false);
      enc::TokenBundle bundle = encoder.encode(g, entry->clip.frames[f]);
      const enc::CamStack cam = encoder.extract_cam(g, bundle);
      const LabelMap seed =
          pseudomask::cam_to_seed(cam, entry->clip.presence[f], cfg.theta_bg);
      const InstanceSet inst = pseudomask::seed_to_instances(seed, cam, cfg.min_area_frac);
      const ImageU8 panel =
          render_panel(entry->clip.frames[f], cam, seed, inst, data.num_classes);
      char name[32];
      std::snprintf(name, sizeof(name), "%06d_panel.png", f);
      write_png_rgb8((dir / name).string(), panel);
      ++panels;
    }
  }
  return panels;
}

}  // namespace weaksurg::plots
