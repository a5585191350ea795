#include "fixtures.hpp"

namespace rfadv::testkit {

const TrainedFixture& trained_fixture() {
  static const TrainedFixture f = [] {
    TrainedFixture t;
    DatasetSpec spec;
    spec.train_per_class = 150;
    spec.test_per_class = 50;
    spec.seed = 77;
    t.data = build_dataset(spec);
    t.config.epochs = 5;
    t.config.eval_subset = 100;
    t.config.seed = 78;
    t.classical = train_classical(build_classifier(4, 79), t.data.train, t.data.test, t.config);
    return t;
  }();
  return f;
}

}  // namespace rfadv::testkit
