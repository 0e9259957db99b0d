#pragma once

#include <functional>
#include <string>

#include "slotrl/rng.hpp"
#include "slotrl/tensor.hpp"

namespace slotrl {

struct FdResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes where the FD estimate itself is unstable
  std::string worst;
};

// Central finite differences against an analytic gradient, checking up to
// max_elems randomly chosen elements of t. f() must re-run the forward pass
// reading the current contents of t. The relative error uses
// |fd - g| / max(|fd|, |g|, 1e-8). Each probe is evaluated at steps h and
// h/10; when the two estimates disagree the probe straddles a kink (relu,
// min) and is skipped rather than compared.
FdResult fd_compare(const std::function<double()>& f, Tensor& t, const Tensor& analytic,
                    const std::string& label, double h, std::size_t max_elems, Rng& rng,
                    FdResult acc = {});

// Generalized probe: optional random shift of the probed element off
// structural kinks (grad_fn re-derives the analytic gradient at the shifted
// point) and a configurable denominator floor.
FdResult fd_compare_at(const std::function<double()>& f,
                       const std::function<Tensor()>& grad_fn, Tensor& t,
                       const Tensor* analytic, const std::string& label, double h,
                       std::size_t max_elems, double denom_floor, bool shift_probe, Rng& rng,
                       FdResult acc = {});

// Full finite-difference sweep over the standalone gradient-suite instances:
// every graph primitive plus every agent loss, `instances` randomized cases
// each. Prints one line per family; returns the worst relative error seen.
double run_gradient_suite(int instances, std::uint64_t seed, bool verbose);

}  // namespace slotrl
