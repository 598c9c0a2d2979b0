#ifndef RTOKIT_FORWARD_MODEL_HPP
#define RTOKIT_FORWARD_MODEL_HPP

#include <Eigen/Dense>
#include <atomic>
#include <memory>

namespace rto {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Nonlinear map x -> F(x) together with the actions of its Jacobian and the
/// Jacobian adjoint. jvp and vjp must be exact adjoints of each other at
/// every point; all samplers rely on that.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;

  virtual VectorXd eval(const VectorXd& x) const = 0;
  /// Jacobian-vector product dF(x) * dx.
  virtual VectorXd jvp(const VectorXd& x, const VectorXd& dx) const = 0;
  /// Adjoint product dF(x)^T * dy.
  virtual VectorXd vjp(const VectorXd& x, const VectorXd& dy) const = 0;
};

/// Wraps a model and counts calls. Counters are atomic so concurrent proposal
/// workers can share one instance.
class CountingModel final : public ForwardModel {
 public:
  explicit CountingModel(std::shared_ptr<const ForwardModel> inner)
      : inner_(std::move(inner)) {}

  Index input_dim() const override { return inner_->input_dim(); }
  Index output_dim() const override { return inner_->output_dim(); }

  VectorXd eval(const VectorXd& x) const override {
    ++eval_count_;
    return inner_->eval(x);
  }
  VectorXd jvp(const VectorXd& x, const VectorXd& dx) const override {
    ++jvp_count_;
    return inner_->jvp(x, dx);
  }
  VectorXd vjp(const VectorXd& x, const VectorXd& dy) const override {
    ++vjp_count_;
    return inner_->vjp(x, dy);
  }

  long evals() const { return eval_count_.load(); }
  long jvps() const { return jvp_count_.load(); }
  long vjps() const { return vjp_count_.load(); }
  void reset() {
    eval_count_ = 0;
    jvp_count_ = 0;
    vjp_count_ = 0;
  }

 private:
  std::shared_ptr<const ForwardModel> inner_;
  mutable std::atomic<long> eval_count_{0};
  mutable std::atomic<long> jvp_count_{0};
  mutable std::atomic<long> vjp_count_{0};
};

}  // namespace rto

#endif
