#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "oracle.hpp"

namespace mlmcgrad {

// Type-erased instance for runtime selection. Ground-truth members return
// std::optional and are empty when the wrapped instance lacks them.
class AnyProblem {
 public:
  template <BiasedOracle P>
  AnyProblem(std::string name, P problem) : name_(std::move(name)), impl_(std::make_shared<Model<P>>(std::move(problem))) {}

  const std::string& name() const { return name_; }
  const OracleMeta& meta() const { return impl_->meta(); }
  OracleOutput sample(int level, const Vector& x, Rng& rng) const { return impl_->sample(level, x, rng); }
  std::optional<double> objective(const Vector& x) const { return impl_->objective(x); }
  std::optional<Vector> gradient(const Vector& x) const { return impl_->gradient(x); }
  std::optional<Vector> level_gradient(const Vector& x, int level) const { return impl_->level_gradient(x, level); }
  Vector project(const Vector& x) const { return impl_->project(x); }
  bool supports_coupled_evaluation() const { return impl_->coupled(); }

  // Access to the concrete instance, or nullptr if the type does not match.
  template <class P>
  const P* as() const {
    auto* m = dynamic_cast<const Model<P>*>(impl_.get());
    return m ? &m->p : nullptr;
  }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual const OracleMeta& meta() const = 0;
    virtual OracleOutput sample(int, const Vector&, Rng&) const = 0;
    virtual std::optional<double> objective(const Vector&) const = 0;
    virtual std::optional<Vector> gradient(const Vector&) const = 0;
    virtual std::optional<Vector> level_gradient(const Vector&, int) const = 0;
    virtual Vector project(const Vector&) const = 0;
    virtual bool coupled() const = 0;
  };

  template <class P>
  struct Model final : Concept {
    explicit Model(P problem) : p(std::move(problem)) {}
    const OracleMeta& meta() const override { return p.meta(); }
    OracleOutput sample(int l, const Vector& x, Rng& rng) const override { return p.sample(l, x, rng); }
    std::optional<double> objective(const Vector& x) const override { return truth::objective(p, x); }
    std::optional<Vector> gradient(const Vector& x) const override { return truth::gradient(p, x); }
    std::optional<Vector> level_gradient(const Vector& x, int l) const override {
      return truth::level_gradient(p, x, l);
    }
    Vector project(const Vector& x) const override { return truth::project(p, x); }
    bool coupled() const override { return truth::supports_coupled_evaluation(p); }
    P p;
  };

  std::string name_;
  std::shared_ptr<const Concept> impl_;
};

}  // namespace mlmcgrad
