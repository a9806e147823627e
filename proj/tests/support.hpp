#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pod4d/sim.hpp"
#include "pod4d/tensor.hpp"

namespace pod4d::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pod4d_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Distinct random sites in canonical order with uniform features in [-1, 1].
inline SparseTensor4D random_tensor(const Shape4& shape, double density, int channels, std::mt19937_64& rng) {
  SparseTensor4D t;
  t.spatial_shape = shape;
  t.channels = channels;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<float> feat(-1.0f, 1.0f);
  for (int x = 0; x < shape[0]; ++x)
    for (int y = 0; y < shape[1]; ++y)
      for (int z = 0; z < shape[2]; ++z)
        for (int t4 = 0; t4 < shape[3]; ++t4)
          if (unit(rng) < density) t.indices.push_back({x, y, z, t4});
  t.features.resize(t.indices.size() * static_cast<std::size_t>(channels));
  for (float& f : t.features) f = feat(rng);
  return t;
}

inline SparseTensor4D random_sites(const Shape4& shape, std::size_t count, int channels, std::mt19937_64& rng) {
  std::vector<std::uint64_t> keys;
  std::uniform_int_distribution<int> ax[4] = {
      std::uniform_int_distribution<int>(0, shape[0] - 1), std::uniform_int_distribution<int>(0, shape[1] - 1),
      std::uniform_int_distribution<int>(0, shape[2] - 1), std::uniform_int_distribution<int>(0, shape[3] - 1)};
  while (keys.size() < count) {
    for (std::size_t k = keys.size(); k < count; ++k) {
      keys.push_back(VoxelIndex{ax[0](rng), ax[1](rng), ax[2](rng), ax[3](rng)}.pack());
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  }
  SparseTensor4D t;
  t.spatial_shape = shape;
  t.channels = channels;
  for (std::uint64_t k : keys) t.indices.push_back(VoxelIndex::unpack(k));
  std::uniform_real_distribution<float> feat(-1.0f, 1.0f);
  t.features.resize(t.indices.size() * static_cast<std::size_t>(channels));
  for (float& f : t.features) f = feat(rng);
  return t;
}

inline std::vector<float> random_floats(std::size_t n, float scale, std::mt19937_64& rng) {
  std::normal_distribution<float> d(0.0f, scale);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

inline sim::LidarModel noiseless(sim::LidarModel m = {}) {
  m.noise_sigma_range = 0.0;
  m.noise_sigma_vel = 0.0;
  return m;
}

inline sim::ActorTrack actor(int id, ObjectClass cls, Vec3 dims, double x, double y, double yaw, Vec2 vel) {
  sim::ActorTrack a;
  a.id = id;
  a.cls = cls;
  a.dims = dims;
  a.pose0.x = x;
  a.pose0.y = y;
  a.pose0.yaw = yaw;
  a.velocity = vel;
  return a;
}

inline sim::Scene empty_scene(Vec2 ego_velocity = Vec2::Zero()) {
  sim::Scene s;
  s.ego.velocity = ego_velocity;
  return s;
}

}  // namespace pod4d::test
