#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "crowdnav/errors.hpp"
#include "crowdnav/flow_map.hpp"
#include "crowdnav/kmeans.hpp"
#include "crowdnav/rng.hpp"
#include "support/exact_kmeans.hpp"

using namespace crowdnav;

namespace {

MovementObservation obs_at(Vec2 start, double length, double direction) {
  MovementObservation o;
  o.start = start;
  o.length = length;
  o.direction = normalize_angle(direction);
  return o;
}

}  // namespace

TEST_CASE("identical samples collapse to one zero-WSS cluster") {
  std::vector<Vec2> samples(20, Vec2{1.0, 0.0});
  const ClusterResult r = cluster_cell(samples, 4, 0.5);
  REQUIRE(r.clusters.size() == 1);
  CHECK(r.clusters[0].mean.x == doctest::Approx(1.0));
  CHECK(r.clusters[0].mean.y == doctest::Approx(0.0));
  CHECK(r.clusters[0].support == 20);
  CHECK(r.wss == doctest::Approx(0.0));
}

TEST_CASE("two opposite groups split into two clusters matching the exact oracle") {
  Rng rng(5);
  std::vector<Vec2> samples;
  for (int k = 0; k < 10; ++k) {
    samples.push_back({1.0 + rng.normal(0.0, 0.01), rng.normal(0.0, 0.01)});
  }
  for (int k = 0; k < 10; ++k) {
    samples.push_back({-1.0 + rng.normal(0.0, 0.01), rng.normal(0.0, 0.01)});
  }
  const ClusterResult r = cluster_cell(samples, 4, 0.5);
  REQUIRE(r.clusters.size() == 2);
  std::vector<Vec2> means{r.clusters[0].mean, r.clusters[1].mean};
  std::sort(means.begin(), means.end(), [](const Vec2& a, const Vec2& b) { return a.x < b.x; });
  CHECK((means[0] - Vec2{-1.0, 0.0}).norm() < 0.05);
  CHECK((means[1] - Vec2{1.0, 0.0}).norm() < 0.05);

  // the exact 2-partition optimum confirms the split
  const double exact = oracle::exact_min_wss(samples, 2);
  CHECK(r.wss == doctest::Approx(exact).epsilon(1e-9));
}

TEST_CASE("huge WSS threshold selects k = 1") {
  std::vector<Vec2> samples{{0, 0}, {1, 0}, {0, 1}, {2, 2}, {-1, -1}};
  const ClusterResult r = cluster_cell(samples, 4, 1e6);
  CHECK(r.clusters.size() == 1);
}

TEST_CASE("empty sample list yields empty result") {
  const ClusterResult r = cluster_cell({}, 4, 0.5);
  CHECK(r.clusters.empty());
  CHECK(r.wss_curve.empty());
}

TEST_CASE("WSS curve is non-increasing in k") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rng.uniform_int(1, 14);
    std::vector<Vec2> samples;
    for (int k = 0; k < n; ++k) {
      samples.push_back({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
    }
    const ClusterResult r = cluster_cell(samples, 4, 0.0);  // force the full curve
    for (std::size_t k = 1; k < r.wss_curve.size(); ++k) {
      CHECK(r.wss_curve[k] <= r.wss_curve[k - 1] + 1e-12);
    }
  }
}

TEST_CASE("clustering is permutation invariant, bit-exact") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(2, 30);
    std::vector<Vec2> samples;
    for (int k = 0; k < n; ++k) {
      samples.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    }
    std::vector<Vec2> shuffled = samples;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1],
                shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    const ClusterResult a = cluster_cell(samples, 4, 0.5);
    const ClusterResult b = cluster_cell(shuffled, 4, 0.5);
    REQUIRE(a.clusters.size() == b.clusters.size());
    for (std::size_t k = 0; k < a.clusters.size(); ++k) {
      CHECK(a.clusters[k].mean.x == b.clusters[k].mean.x);
      CHECK(a.clusters[k].mean.y == b.clusters[k].mean.y);
      CHECK(a.clusters[k].support == b.clusters[k].support);
    }
  }
}

TEST_CASE("direction quantization: values, tie rule, wrap invariance") {
  CHECK(quantize_direction(0.0) == 0);
  CHECK(quantize_direction(M_PI) == 4);
  CHECK(quantize_direction(-M_PI / 2.0) == 6);
  // boundary at pi/8 rounds toward the larger bin
  CHECK(quantize_direction(M_PI / 8.0) == 1);
  CHECK(quantize_direction(3.0 * M_PI / 8.0) == 2);

  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    const double theta = rng.uniform(-12.0, 12.0);
    CHECK(quantize_direction(theta) == quantize_direction(theta + 2.0 * M_PI));
    const int bin = quantize_direction(theta);
    CHECK(bin >= 0);
    CHECK(bin <= 7);
    CHECK(angdiff(theta, bin_center(bin)) <= M_PI / 8.0 + 1e-9);
  }
}

TEST_CASE("floor indexing and boundary convention") {
  CrowdFlowMap map({0, 0}, 1.0, 8, 8);
  const MapperParams params;
  std::vector<MovementObservation> obs{obs_at({2.5, 2.5}, 1.0, 0.0),
                                       obs_at({3.0, 3.0}, 1.0, 0.0)};
  CHECK(map.assign_to_cells(obs, params) == 0);
  CHECK(map.cell(2, 2).samples.size() == 1);
  CHECK(map.cell(3, 3).samples.size() == 1);

  std::vector<MovementObservation> bad{obs_at({9.0, 1.0}, 1.0, 0.0),
                                       obs_at({1.0, 1.0}, 3.5, 0.0)};
  CHECK(map.assign_to_cells(bad, params) == 2);  // off-map + over the speed bound
  CHECK(map.dropped_observations() == 2);
}

TEST_CASE("buffer evicts oldest beyond capacity") {
  CrowdFlowMap map({0, 0}, 1.0, 4, 4);
  MapperParams params;
  params.buffer_capacity = 256;
  std::vector<MovementObservation> obs;
  for (int k = 0; k < 300; ++k) {
    obs.push_back(obs_at({0.5, 0.5}, 0.001 * k, 0.0));
  }
  map.assign_to_cells(obs, params);
  const FlowCell& cell = map.cell(0, 0);
  REQUIRE(cell.samples.size() == 256);
  CHECK(cell.samples.front().x == doctest::Approx(0.001 * 44));
  CHECK(cell.samples.back().x == doctest::Approx(0.001 * 299));
}

TEST_CASE("refresh converts clusters to binned components and merges bins") {
  CrowdFlowMap map({0, 0}, 1.0, 4, 4);
  MapperParams params;

  SUBCASE("tight east cluster") {
    std::vector<MovementObservation> obs;
    for (int k = 0; k < 12; ++k) obs.push_back(obs_at({1.5, 1.5}, 1.1, 0.0));
    map.assign_to_cells(obs, params);
    map.refresh_cell(1, 1, params);
    const FlowCell& cell = map.cell(1, 1);
    REQUIRE(cell.components.size() == 1);
    CHECK(cell.components[0].direction_bin == 0);
    CHECK(cell.components[0].mean_speed == doctest::Approx(1.1));
    CHECK(cell.components[0].support == 12);
    CHECK(cell.samples_since_cluster == 0);
  }

  SUBCASE("clusters at +-0.1 rad merge into bin 0") {
    std::vector<MovementObservation> obs;
    for (int k = 0; k < 10; ++k) obs.push_back(obs_at({2.5, 2.5}, 1.0, 0.1));
    for (int k = 0; k < 10; ++k) obs.push_back(obs_at({2.5, 2.5}, 1.0, -0.1));
    map.assign_to_cells(obs, params);
    map.refresh_cell(2, 2, params);
    const FlowCell& cell = map.cell(2, 2);
    REQUIRE(cell.components.size() == 1);
    CHECK(cell.components[0].direction_bin == 0);
    CHECK(cell.components[0].support == 20);
  }

  SUBCASE("empty buffer clears components") {
    FlowCell& cell = map.cell_mutable(0, 0);
    cell.components.push_back({0, 1.0, 3});
    map.refresh_cell(0, 0, params);
    CHECK(map.cell(0, 0).components.empty());
  }
}

TEST_CASE("refresh is idempotent on an unchanged buffer") {
  CrowdFlowMap map({0, 0}, 1.0, 4, 4);
  MapperParams params;
  Rng rng(23);
  std::vector<MovementObservation> obs;
  for (int k = 0; k < 40; ++k) {
    obs.push_back(obs_at({0.5, 0.5}, rng.uniform(0.1, 1.4), rng.uniform(-M_PI, M_PI)));
  }
  map.assign_to_cells(obs, params);
  map.refresh_cell(0, 0, params);
  const std::vector<FlowComponent> first = map.cell(0, 0).components;
  CHECK_FALSE(map.refresh_cell(0, 0, params));  // unchanged
  const std::vector<FlowComponent>& second = map.cell(0, 0).components;
  REQUIRE(first.size() == second.size());
  for (std::size_t k = 0; k < first.size(); ++k) {
    CHECK(first[k].direction_bin == second[k].direction_bin);
    CHECK(first[k].mean_speed == second[k].mean_speed);
    CHECK(first[k].support == second[k].support);
  }
}

TEST_CASE("map quality: perfect, empty, perpendicular") {
  std::vector<MovementObservation> refs;
  for (int k = 0; k < 8; ++k) refs.push_back(obs_at({1.5, 1.5}, 1.0, 0.0));

  CrowdFlowMap map({0, 0}, 1.0, 4, 4);
  SUBCASE("matching single component scores 1") {
    map.cell_mutable(1, 1).components.push_back({0, 1.0, 8});
    CHECK(map_quality(map, refs) == doctest::Approx(1.0));
  }
  SUBCASE("empty map scores 0") {
    CHECK(map_quality(map, refs) == doctest::Approx(0.0));
  }
  SUBCASE("perpendicular reference scores 0.5") {
    map.cell_mutable(1, 1).components.push_back({0, 1.0, 8});
    std::vector<MovementObservation> perp;
    for (int k = 0; k < 4; ++k) perp.push_back(obs_at({1.5, 1.5}, 1.0, M_PI / 2.0));
    CHECK(map_quality(map, perp) == doctest::Approx(0.5));
  }
  SUBCASE("no references is an error") {
    CHECK_THROWS_AS(map_quality(map, {}), std::invalid_argument);
  }
}

TEST_CASE("map built from bin-centre references scores exactly 1") {
  CrowdFlowMap map({0, 0}, 1.0, 6, 6);
  MapperParams params;
  std::vector<MovementObservation> refs;
  for (int k = 0; k < 20; ++k) refs.push_back(obs_at({1.5, 1.5}, 1.0, 0.0));
  for (int k = 0; k < 20; ++k) refs.push_back(obs_at({4.5, 4.5}, 1.0, M_PI / 2.0));
  map.fuse(refs, params);
  CHECK(map_quality(map, refs) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quality stays within [0, 1] on random maps") {
  Rng rng(29);
  MapperParams params;
  for (int trial = 0; trial < 50; ++trial) {
    CrowdFlowMap map({0, 0}, 1.0, 6, 6);
    std::vector<MovementObservation> stream, refs;
    for (int k = 0; k < 200; ++k) {
      stream.push_back(obs_at({rng.uniform(0.0, 6.0), rng.uniform(0.0, 6.0)},
                              rng.uniform(0.0, 1.5), rng.uniform(-M_PI, M_PI)));
    }
    for (int k = 0; k < 50; ++k) {
      refs.push_back(obs_at({rng.uniform(0.0, 6.0), rng.uniform(0.0, 6.0)},
                            rng.uniform(0.0, 1.5), rng.uniform(-M_PI, M_PI)));
    }
    map.fuse(stream, params);
    const double q = map_quality(map, refs);
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
  }
}

TEST_CASE("coverage grows monotonically with more observations") {
  Rng rng(31);
  MapperParams params;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<MovementObservation> s1, s2;
    for (int k = 0; k < 60; ++k) {
      s1.push_back(obs_at({rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)},
                          rng.uniform(0.0, 1.5), rng.uniform(-M_PI, M_PI)));
      s2.push_back(obs_at({rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)},
                          rng.uniform(0.0, 1.5), rng.uniform(-M_PI, M_PI)));
    }
    CrowdFlowMap only_s1({0, 0}, 1.0, 8, 8);
    only_s1.fuse(s1, params);
    CrowdFlowMap both({0, 0}, 1.0, 8, 8);
    both.fuse(s1, params);
    both.fuse(s2, params);
    for (int j = 0; j < 8; ++j) {
      for (int i = 0; i < 8; ++i) {
        if (!only_s1.cell(i, j).empty()) CHECK(!both.cell(i, j).empty());
      }
    }
  }
}

TEST_CASE("map serialization round trip") {
  SUBCASE("empty map") {
    CrowdFlowMap map({1.0, 2.0}, 0.5, 6, 4);
    const CrowdFlowMap loaded = load_map(save_map(map));
    CHECK(loaded.width() == 6);
    CHECK(loaded.height() == 4);
    CHECK(loaded.resolution() == doctest::Approx(0.5));
    CHECK(loaded.origin().x == doctest::Approx(1.0));
    CHECK(loaded.nonempty_cell_count() == 0);
  }

  SUBCASE("populated map is component-equal after the round trip") {
    Rng rng(37);
    CrowdFlowMap map({0, 0}, 1.0, 10, 10);
    MapperParams params;
    std::vector<MovementObservation> stream;
    for (int k = 0; k < 600; ++k) {
      stream.push_back(obs_at({rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)},
                              rng.uniform(0.1, 1.5), rng.uniform(-M_PI, M_PI)));
    }
    map.fuse(stream, params);
    map.refresh_all(params);
    const CrowdFlowMap loaded = load_map(save_map(map));
    for (int j = 0; j < 10; ++j) {
      for (int i = 0; i < 10; ++i) {
        const auto& a = map.cell(i, j).components;
        const auto& b = loaded.cell(i, j).components;
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
          CHECK(a[k].direction_bin == b[k].direction_bin);
          CHECK(a[k].mean_speed == doctest::Approx(b[k].mean_speed).epsilon(1e-12));
          CHECK(a[k].support == b[k].support);
        }
      }
    }

    const CrowdFlowMap with_samples = load_map(save_map(map, true));
    for (int j = 0; j < 10; ++j) {
      for (int i = 0; i < 10; ++i) {
        CHECK(with_samples.cell(i, j).samples.size() == map.cell(i, j).samples.size());
      }
    }
  }

  SUBCASE("corrupt and mismatched payloads are rejected") {
    CrowdFlowMap map({0, 0}, 1.0, 4, 4);
    map.cell_mutable(1, 1).components.push_back({0, 1.0, 3});
    const std::string payload = save_map(map);
    CHECK_THROWS_AS(load_map(payload.substr(0, payload.size() / 2)), ParseError);
    std::string wrong_schema = payload;
    wrong_schema.replace(wrong_schema.find("\"schema\": 1"), 11, "\"schema\": 9");
    CHECK_THROWS_AS(load_map(wrong_schema), ValidationError);
    CHECK_THROWS_AS(load_map("{\"schema\": 1}"), ParseError);
  }
}

TEST_CASE("quality heatmap pgm") {
  CrowdFlowMap map({0, 0}, 1.0, 3, 2);
  map.cell_mutable(0, 0).components.push_back({0, 1.0, 4});
  std::vector<MovementObservation> refs{obs_at({0.5, 0.5}, 1.0, 0.0),
                                        obs_at({2.5, 1.5}, 1.0, M_PI)};
  const std::string path = "/tmp/crowdnav_test_quality.pgm";
  write_quality_pgm(map, refs, path);

  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  CHECK(magic == "P5");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  // top row is j=1: the ref at (2.5,1.5) hits an empty cell -> quality 0 -> black
  CHECK(pixels[2] == 0);
  // unreferenced cells render white
  CHECK(pixels[1] == 255);
  // bottom row, cell (0,0): perfect match -> white
  CHECK(pixels[3] == 255);
}
