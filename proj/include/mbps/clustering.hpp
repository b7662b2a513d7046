#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mbps {

using Assignment = std::vector<int>;

/// Fraction of draws in which each pair of series shares a cluster.
Eigen::MatrixXd coclustering_mean(std::span<const Assignment> draws);

/// Index of the draw whose tie matrix is closest to the mean tie matrix in
/// Frobenius norm. Ties go to the smallest index.
std::size_t representative_draw(std::span<const Assignment> draws);

/// Squared Frobenius distance over the strict upper triangle.
double coclustering_distance(const Assignment& z, const Eigen::MatrixXd& mean);

std::size_t alive_clusters(std::span<const int> z);
std::vector<std::size_t> alive_cluster_counts(std::span<const Assignment> draws);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Relabels so that clusters are numbered by first appearance.
Assignment canonical_labels(std::span<const int> z);

/// Lloyd's algorithm on standardised 2-d features, seeded deterministically
/// from quantiles of the first feature. Returns labels in [0, groups).
Assignment kmeans_partition(std::span<const std::array<double, 2>> points, std::size_t groups,
                            std::size_t max_iter = 100);

}  // namespace mbps
