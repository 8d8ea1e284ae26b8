#pragma once

#include <Eigen/Dense>
#include <vector>

namespace airfed {

// Linear-regression dataset split evenly across devices.  partition[k] holds
// the row indices of device k's shard; shards are disjoint, equal-sized, and
// cover every sample.
struct SyntheticDataset {
  Eigen::MatrixXd features;                    // |D| x q, one sample per row
  Eigen::VectorXd labels;                      // |D|
  std::vector<std::vector<int>> partition;     // K shards of size D_bar each

  int num_samples() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int num_devices() const { return static_cast<int>(partition.size()); }
  int shard_size() const { return partition.empty() ? 0 : static_cast<int>(partition[0].size()); }

  void validate() const;
};

}  // namespace airfed
