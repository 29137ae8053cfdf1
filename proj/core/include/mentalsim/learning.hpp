#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace mentalsim {

inline constexpr double kCovarianceRidge = 1e-9;

struct GaussianModel {
  int dim = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  int n_samples = 0;
  std::string source;  // content hash of the training set

  /// Lower-triangular L with L*L^T = covariance.
  Eigen::MatrixXd cholesky() const;
  bool valid(std::string* why = nullptr) const;
};

/// Sample mean and unbiased covariance; adds kCovarianceRidge*I when the
/// smallest eigenvalue is below it. Throws TooFewPoints / DimensionMismatch.
GaussianModel fit(const std::vector<Eigen::VectorXd>& points);

Eigen::VectorXd sample(const GaussianModel& m, std::mt19937_64& rng);
double log_density(const GaussianModel& m, const Eigen::VectorXd& x);

void save_model(const GaussianModel& m, const std::filesystem::path& file);
GaussianModel load_model(const std::filesystem::path& file);

/// successful_action_params over every episode in `dir`, then fit. The model
/// records a hash of the extracted points.
GaussianModel train_from_neems(const std::filesystem::path& dir, const std::string& action,
                               const std::string& path);

}  // namespace mentalsim
