#include "weaksurg/pseudomask.hpp"

#include <deque>
#include <iostream>

namespace weaksurg::pseudomask {

LabelMap cam_to_seed(const enc::CamStack& cam, const std::vector<int>& presence,
                     double theta_bg) {
  const int c = static_cast<int>(cam.upsampled.size());
  check_config(static_cast<int>(presence.size()) == c,
               "cam_to_seed: presence length ", presence.size(), " vs ", c, " classes");
  const int s = cam.image_size;
  LabelMap seed(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double best = 0.0;
      int best_class = -1;
      for (int k = 0; k < c; ++k) {
        if (!presence[k]) continue;
        const double v = cam.upsampled[k](y, x);
        if (v > best) {  // strict: ties resolve to the lowest class id
          best = v;
          best_class = k;
        }
      }
      seed.at(x, y) =
          (best_class >= 0 && best >= theta_bg) ? static_cast<std::uint8_t>(best_class + 1) : 0;
    }
  }
  return seed;
}

InstanceSet seed_to_instances(const LabelMap& seed, const enc::CamStack& cam,
                              double min_area_frac) {
  check_config(cam.image_size == seed.width && seed.width == seed.height,
               "seed_to_instances: CAM and seed sizes differ");
  const int w = seed.width, h = seed.height;
  const double min_area = min_area_frac * w * h;
  std::vector<char> visited(static_cast<std::size_t>(w) * h, 0);
  InstanceSet out;

  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t start = static_cast<std::size_t>(sy) * w + sx;
      if (visited[start] || seed.data[start] == 0) continue;
      const std::uint8_t label = seed.data[start];
      MaskU8 mask(w, h);
      double cam_sum = 0.0;
      int area = 0;
      std::deque<std::pair<int, int>> queue{{sx, sy}};
      visited[start] = 1;
      while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        mask.at(x, y) = 1;
        cam_sum += cam.upsampled[label - 1](y, x);
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
            if (visited[ni] || seed.data[ni] != label) continue;
            visited[ni] = 1;
            queue.emplace_back(nx, ny);
          }
        }
      }
      if (area < min_area) continue;
      Instance inst;
      inst.class_id = label - 1;
      inst.score = cam_sum / area;
      inst.mask = std::move(mask);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::unique_ptr<Refiner> make_refiner(const std::string& name) {
  if (name.empty() || name == "identity" || name == "none")
    return std::make_unique<IdentityRefiner>();
  std::cerr << "[weaksurg] refiner backend '" << name
            << "' unavailable; falling back to identity\n";
  return std::make_unique<IdentityRefiner>();
}

enc::CamStack oracle_cam_from_instances(const InstanceSet& instances, int num_classes,
                                        int image_size, int patch_size) {
  enc::CamStack cam;
  cam.image_size = image_size;
  cam.grid = image_size / std::max(patch_size, 1);
  for (int c = 0; c < num_classes; ++c)
    cam.upsampled.push_back(Matrix::Zero(image_size, image_size));
  for (const auto& inst : instances) {
    check_config(inst.class_id >= 0 && inst.class_id < num_classes,
                 "oracle_cam: class id out of range");
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x)
        if (inst.mask.at(x, y)) cam.upsampled[inst.class_id](y, x) = 1.0;
  }
  for (int c = 0; c < num_classes; ++c) {
    Matrix grid = Matrix::Zero(cam.grid, cam.grid);
    for (int gy = 0; gy < cam.grid; ++gy)
      for (int gx = 0; gx < cam.grid; ++gx) {
        double acc = 0.0;
        for (int y = gy * patch_size; y < (gy + 1) * patch_size; ++y)
          for (int x = gx * patch_size; x < (gx + 1) * patch_size; ++x)
            acc += cam.upsampled[c](y, x);
        grid(gy, gx) = acc / (patch_size * patch_size);
      }
    cam.maps.push_back(std::move(grid));
  }
  return cam;
}

}  // namespace weaksurg::pseudomask
