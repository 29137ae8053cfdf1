#include "mentalsim/learning.hpp"

#include "mentalsim/error.hpp"
#include "mentalsim/neem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <string_view>

namespace mentalsim {

using nlohmann::json;

Eigen::MatrixXd GaussianModel::cholesky() const {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw Error(Errc::InvalidArgument, "covariance is not positive definite");
  return llt.matrixL();
}

bool GaussianModel::valid(std::string* why) const {
  auto fail = [&](const char* msg) {
    if (why) *why = msg;
    return false;
  };
  if (dim <= 0 || mean.size() != dim) return fail("dim does not match mean");
  if (covariance.rows() != dim || covariance.cols() != dim) return fail("covariance has wrong shape");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) return fail("covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0) return fail("covariance not positive definite");
  return true;
}

GaussianModel fit(const std::vector<Eigen::VectorXd>& points) {
  if (points.size() < 2)
    throw Error(Errc::TooFewPoints, "need at least 2 points, got " + std::to_string(points.size()));
  const Eigen::Index d = points.front().size();
  if (d == 0) throw Error(Errc::DimensionMismatch, "zero-dimensional points");
  for (const auto& p : points)
    if (p.size() != d) throw Error(Errc::DimensionMismatch, "mixed point dimensions");

  const double n = static_cast<double>(points.size());
  GaussianModel m;
  m.dim = static_cast<int>(d);
  m.n_samples = static_cast<int>(points.size());
  m.mean = Eigen::VectorXd::Zero(d);
  for (const auto& p : points) m.mean += p;
  m.mean /= n;
  m.covariance = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : points) {
    const Eigen::VectorXd c = p - m.mean;
    m.covariance.noalias() += c * c.transpose();
  }
  m.covariance /= n - 1.0;
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.covariance, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < kCovarianceRidge)
    m.covariance += kCovarianceRidge * Eigen::MatrixXd::Identity(d, d);

  std::string bytes;
  for (const auto& p : points)
    for (Eigen::Index i = 0; i < d; ++i) bytes += json(p[i]).dump() + ",";
  m.source = content_hash(bytes);
  return m;
}

Eigen::VectorXd sample(const GaussianModel& m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(m.dim);
  for (int i = 0; i < m.dim; ++i) z[i] = normal(rng);
  return m.mean + m.cholesky() * z;
}

double log_density(const GaussianModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim) throw Error(Errc::DimensionMismatch, "point dimension differs from model");
  Eigen::LLT<Eigen::MatrixXd> llt(m.covariance);
  if (llt.info() != Eigen::Success) throw Error(Errc::InvalidArgument, "covariance is not positive definite");
  const Eigen::VectorXd y = llt.matrixL().solve(x - m.mean);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (m.dim * std::log(2.0 * std::numbers::pi) + log_det + y.squaredNorm());
}

void save_model(const GaussianModel& m, const std::filesystem::path& file) {
  json j;
  j["format"] = "mentalsim-gaussian";
  j["dim"] = m.dim;
  j["mean"] = std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size());
  std::vector<double> cov;
  for (int r = 0; r < m.dim; ++r)
    for (int c = 0; c < m.dim; ++c) cov.push_back(m.covariance(r, c));
  j["covariance"] = cov;
  j["n_samples"] = m.n_samples;
  j["source"] = m.source;
  std::ofstream out(file, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::StorageFailure, "cannot write " + file.string());
}

GaussianModel load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::StorageFailure, "cannot read " + file.string());
  GaussianModel m;
  try {
    const json j = json::parse(in);
    m.dim = j.at("dim").get<int>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto cov = j.at("covariance").get<std::vector<double>>();
    if (m.dim <= 0 || static_cast<int>(mean.size()) != m.dim ||
        static_cast<int>(cov.size()) != m.dim * m.dim)
      throw Error(Errc::DimensionMismatch, file.string() + ": sizes do not match dim");
    m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), m.dim);
    m.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cov.data(), m.dim, m.dim);
    m.n_samples = j.value("n_samples", 0);
    m.source = j.value("source", "");
  } catch (const json::exception& e) {
    throw Error(Errc::StorageFailure, file.string() + ": " + e.what());
  }
  std::string why;
  if (!m.valid(&why)) throw Error(Errc::InvalidArgument, file.string() + ": " + why);
  return m;
}

GaussianModel train_from_neems(const std::filesystem::path& dir, const std::string& action,
                               const std::string& path) {
  const auto episodes = std::filesystem::is_directory(dir) ? load_episodes(dir) : std::vector<Episode>{};
  return fit(successful_action_params(episodes, action, path));
}

}  // namespace mentalsim
