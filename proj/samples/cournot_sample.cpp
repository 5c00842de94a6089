// Learns (a, b) of a five-firm Cournot market from 50 noiseless equilibria.

#include <iostream>

#include "ratlearn.hpp"

int main() {
  using namespace ratlearn;
  const AffineGameForm form = cournot_form(5);
  Vector theta_true(2);
  theta_true << 2.0, 0.7;
  const Dataset data =
      generate_dataset(form, theta_true, cournot_context_sampler(5), 50, 0.0, 11);

  TrainConfig cfg;
  cfg.T = 3000;
  cfg.eta0 = 0.5;
  cfg.seed = 3;
  // a standard normal start often lands where every firm produces nothing
  // and the loss is flat
  cfg.theta_init = Vector::Ones(2);
  const TrainResult res = train(form, data, cfg);

  std::cout << "true theta    " << theta_true.transpose() << '\n'
            << "learned theta " << res.theta.theta.transpose() << '\n'
            << "test error    " << res.log.final_test_error << '\n';
  return 0;
}
