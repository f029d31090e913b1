#include "cpmpc/predictor.hpp"

#include <Eigen/Dense>

namespace cpmpc {

void OneStepModel::validate() const {
  if (kind == PredictorKind::linear_affine) {
    if (A.rows() != A.cols() || A.rows() != b.size() || b.size() < 1)
      throw ConfigError("linear-affine model dimensions do not match");
    if (!A.allFinite() || !b.allFinite())
      throw ConfigError("linear-affine model has non-finite coefficients");
  }
}

PredictorKind predictor_kind_from_string(const std::string& s) {
  if (s == "constant-velocity") return PredictorKind::constant_velocity;
  if (s == "linear") return PredictorKind::linear_affine;
  throw ConfigError("unknown predictor kind '" + s +
                    "' (expected 'linear' or 'constant-velocity')");
}

std::string to_string(PredictorKind kind) {
  return kind == PredictorKind::constant_velocity ? "constant-velocity" : "linear";
}

OneStepModel fit_linear_one_step(const std::vector<const Trajectory*>& train, double ridge) {
  if (train.empty()) throw ConfigError("fit_linear_one_step needs at least one trajectory");
  if (ridge < 0.0) throw ConfigError("ridge must be nonnegative");

  const int dim = train.front()->layout().joint_dim();
  const int aug = dim + 1;  // [y; 1]

  // Normal equations over all consecutive pairs:
  //   W * G = S, W = [A b], G = sum z z^T + ridge * diag(I, 0), S = sum y' z^T
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(aug, aug);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(dim, aug);
  Eigen::VectorXd z(aug);
  for (const Trajectory* traj : train) {
    if (traj->layout().joint_dim() != dim)
      throw ConfigError("training trajectories have mixed joint dimensions");
    for (int t = 0; t < traj->horizon(); ++t) {
      z.head(dim) = traj->state(t);
      z[dim] = 1.0;
      gram.noalias() += z * z.transpose();
      cross.noalias() += traj->state(t + 1) * z.transpose();
    }
  }
  gram.topLeftCorner(dim, dim) += ridge * Eigen::MatrixXd::Identity(dim, dim);

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (!lu.isInvertible()) {
    if (ridge == 0.0)
      throw NumericalError(
          "normal matrix is singular with ridge = 0; refit with a positive ridge "
          "(e.g. 1e-6)");
    throw NumericalError("normal matrix is singular despite ridge > 0");
  }
  // Solve G^T W^T = S^T; G is symmetric.
  const Eigen::MatrixXd weights = lu.solve(cross.transpose()).transpose();

  OneStepModel model;
  model.kind = PredictorKind::linear_affine;
  model.A = weights.leftCols(dim);
  model.b = weights.col(dim);
  model.validate();
  return model;
}

OneStepModel fit_linear_one_step(const std::vector<Trajectory>& train, double ridge) {
  std::vector<const Trajectory*> view;
  view.reserve(train.size());
  for (const auto& t : train) view.push_back(&t);
  return fit_linear_one_step(view, ridge);
}

std::vector<JointState> predict_from(const OneStepModel& model, const JointState& observed,
                                     const JointState* predecessor, int t, int horizon) {
  if (t < 0 || t >= horizon) throw ConfigError("predict_from needs t < horizon");

  std::vector<JointState> estimates;
  estimates.reserve(horizon - t);

  if (model.kind == PredictorKind::constant_velocity) {
    // g advances by the velocity implied by the last two observations;
    // with no predecessor (t = 0) the velocity falls back to zero.
    const JointState velocity =
        predecessor ? JointState(observed - *predecessor) : JointState(JointState::Zero(observed.size()));
    JointState current = observed;
    for (int tau = t + 1; tau <= horizon; ++tau) {
      current += velocity;
      if (!current.allFinite())
        throw PredictionError("non-finite prediction at tau = " + std::to_string(tau), tau);
      estimates.push_back(current);
    }
    return estimates;
  }

  model.validate();
  if (model.joint_dim() != observed.size())
    throw ConfigError("observation dimension does not match the model");
  JointState current = observed;
  for (int tau = t + 1; tau <= horizon; ++tau) {
    current = model.A * current + model.b;
    if (!current.allFinite())
      throw PredictionError("non-finite prediction at tau = " + std::to_string(tau), tau);
    estimates.push_back(current);
  }
  return estimates;
}

PredictionTable::PredictionTable(int horizon, int joint_dim)
    : entries_(horizon), joint_dim_(joint_dim) {}

void PredictionTable::set(int t, int tau, JointState estimate) {
  if (estimate.size() != joint_dim_) throw ConfigError("prediction has wrong dimension");
  entries_.at(t, tau) = std::move(estimate);
}

const JointState& PredictionTable::at(int t, int tau) const {
  const JointState& value = entries_.at(t, tau);
  if (value.size() == 0)
    throw ConfigError("prediction table entry (" + std::to_string(t) + ", " +
                      std::to_string(tau) + ") was never set");
  return value;
}

bool PredictionTable::complete() const {
  bool ok = true;
  entries_.for_each([&](int, int, const JointState& v) {
    if (v.size() != joint_dim_ || !v.allFinite()) ok = false;
  });
  return ok;
}

PredictionTable build_prediction_table(const OneStepModel& model, const Trajectory& traj) {
  PredictionTable table(traj.horizon(), traj.layout().joint_dim());
  JointState previous;
  for (int t = 0; t < traj.horizon(); ++t) {
    const JointState observed = traj.state(t);
    auto estimates =
        predict_from(model, observed, t > 0 ? &previous : nullptr, t, traj.horizon());
    for (int tau = t + 1; tau <= traj.horizon(); ++tau)
      table.set(t, tau, std::move(estimates[tau - t - 1]));
    previous = observed;
  }
  return table;
}

nlohmann::json model_to_json(const OneStepModel& model) {
  nlohmann::json j;
  j["kind"] = to_string(model.kind);
  if (model.kind == PredictorKind::linear_affine) {
    model.validate();
    j["dim"] = model.joint_dim();
    std::vector<double> a_rows;
    a_rows.reserve(model.A.size());
    for (Eigen::Index r = 0; r < model.A.rows(); ++r)
      for (Eigen::Index c = 0; c < model.A.cols(); ++c) a_rows.push_back(model.A(r, c));
    j["A"] = a_rows;  // row-major
    j["b"] = std::vector<double>(model.b.data(), model.b.data() + model.b.size());
  }
  return j;
}

OneStepModel model_from_json(const nlohmann::json& j) {
  OneStepModel model;
  model.kind = predictor_kind_from_string(j.at("kind").get<std::string>());
  if (model.kind == PredictorKind::linear_affine) {
    const int dim = j.at("dim").get<int>();
    const auto a = j.at("A").get<std::vector<double>>();
    const auto b = j.at("b").get<std::vector<double>>();
    if (static_cast<int>(a.size()) != dim * dim || static_cast<int>(b.size()) != dim)
      throw ConfigError("model JSON dimensions are inconsistent");
    model.A.resize(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) model.A(r, c) = a[static_cast<std::size_t>(r) * dim + c];
    model.b = Eigen::Map<const Eigen::VectorXd>(b.data(), dim);
    model.validate();
  }
  return model;
}

}  // namespace cpmpc
