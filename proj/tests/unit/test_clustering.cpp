#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mbps/clustering.hpp"
#include "support/metric_oracles.hpp"

using namespace mbps;

TEST_CASE("coclustering mean of identical draws is their tie matrix") {
  const std::vector<Assignment> draws(3, Assignment{0, 0, 1, 2, 1});
  CHECK(coclustering_mean(draws) == oracle::tie_matrix(draws[0]));
}

TEST_CASE("pair together in one of two draws gives one half") {
  const std::vector<Assignment> draws{{0, 0, 1}, {0, 1, 1}};
  const auto m = coclustering_mean(draws);
  CHECK(m(0, 1) == 0.5);
  CHECK(m(1, 2) == 0.5);
  CHECK(m(0, 2) == 0.0);
  CHECK(m(1, 1) == 1.0);
}

TEST_CASE("coclustering summaries ignore label names") {
  std::mt19937_64 g(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto inst = oracle::random_metric_instance(g);
    auto relabelled = inst.draws;
    for (auto& z : relabelled) {
      std::array<int, 4> perm{0, 1, 2, 3};
      std::shuffle(perm.begin(), perm.end(), g);
      for (auto& v : z) v = perm[v] + 7;
    }
    CHECK(coclustering_mean(inst.draws) == coclustering_mean(relabelled));
    CHECK(representative_draw(inst.draws) == representative_draw(relabelled));
  }
}

TEST_CASE("coclustering mean permutes with the series") {
  std::mt19937_64 g(12);
  auto inst = oracle::random_metric_instance(g);
  const std::size_t n = inst.draws[0].size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);
  auto permuted = inst.draws;
  for (std::size_t l = 0; l < permuted.size(); ++l)
    for (std::size_t i = 0; i < n; ++i) permuted[l][i] = inst.draws[l][perm[i]];
  const auto a = coclustering_mean(inst.draws);
  const auto b = coclustering_mean(permuted);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) CHECK(b(i, j) == a(perm[i], perm[j]));
}

TEST_CASE("coclustering matrix is symmetric with unit diagonal") {
  std::mt19937_64 g(13);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = coclustering_mean(oracle::random_metric_instance(g).draws);
    CHECK(m == m.transpose());
    CHECK((m.diagonal().array() == 1.0).all());
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 1.0);
  }
}

TEST_CASE("representative draw") {
  CHECK(representative_draw(std::vector<Assignment>{{0, 1, 1}}) == 0);

  // {AB|C} nine times and {A|B|C} once, with the singleton draw first.
  std::vector<Assignment> draws{{0, 1, 2}};
  for (int k = 0; k < 9; ++k) draws.push_back({0, 0, 1});
  const auto l = representative_draw(draws);
  CHECK(l == 1);
  const auto mean = coclustering_mean(draws);
  // distances by hand: majority (1 - 0.9)^2 = 0.01, singleton 0.9^2 = 0.81
  CHECK(coclustering_distance(draws[1], mean) == doctest::Approx(0.01));
  CHECK(coclustering_distance(draws[0], mean) == doctest::Approx(0.81));

  std::mt19937_64 g(14);
  for (int rep = 0; rep < 50; ++rep) {
    const auto inst = oracle::random_metric_instance(g);
    const auto best = representative_draw(inst.draws);
    const auto m = coclustering_mean(inst.draws);
    const double d = (oracle::tie_matrix(inst.draws[best]) - m).norm();
    for (const auto& z : inst.draws) CHECK(d <= (oracle::tie_matrix(z) - m).norm() + 1e-12);
  }
}

TEST_CASE("representative draw breaks exact ties by index") {
  // two partitions at equal distance from the mean
  const std::vector<Assignment> draws{{0, 0, 1, 1}, {0, 1, 0, 1}};
  CHECK(representative_draw(draws) == 0);
  const std::vector<Assignment> swapped{{0, 1, 0, 1}, {0, 0, 1, 1}};
  CHECK(representative_draw(swapped) == 0);
}

TEST_CASE("alive clusters") {
  CHECK(alive_clusters(Assignment{1, 1, 1}) == 1);
  CHECK(alive_clusters(Assignment{1, 2, 3}) == 3);
  const std::vector<Assignment> draws{{0, 0}, {4, 9}};
  CHECK(alive_cluster_counts(draws) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("adjusted rand index") {
  const Assignment a{0, 0, 1, 1, 2, 2};
  CHECK(adjusted_rand_index(a, Assignment{5, 5, 3, 3, 1, 1}) == doctest::Approx(1.0));
  // b splits the last pair: pair counts are 2 within cells, 3 in a, 2 in b
  const Assignment b{0, 0, 1, 1, 2, 3};
  const double sij = 2, sa = 3, sb = 2, total = 15;
  const double expected = (sij - sa * sb / total) / (0.5 * (sa + sb) - sa * sb / total);
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(expected));
  CHECK_THROWS(adjusted_rand_index(a, Assignment{0}));
}

TEST_CASE("canonical labels number clusters by first appearance") {
  CHECK(canonical_labels(Assignment{7, 3, 7, 9, 3}) == Assignment{0, 1, 0, 2, 1});
}

TEST_CASE("kmeans separates well-separated groups deterministically") {
  std::mt19937_64 g(15);
  std::normal_distribution<double> nd(0.0, 0.1);
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({(i % 3) * 5.0 + nd(g), (i % 3) * 0.5 + nd(g)});
  const auto z = kmeans_partition(pts, 3);
  CHECK(adjusted_rand_index(z, Assignment{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2}) ==
        doctest::Approx(1.0));
  CHECK(kmeans_partition(pts, 3) == z);
  CHECK(alive_clusters(kmeans_partition(pts, 1)) == 1);
}
