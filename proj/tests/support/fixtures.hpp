#pragma once

// Small trained models shared by the tests of one executable. Built lazily
// on first use.

#include "rfadv/models.hpp"
#include "rfadv/rfsynth.hpp"
#include "rfadv/training.hpp"

namespace rfadv::testkit {

struct TrainedFixture {
  DatasetSplit data;
  TrainConfig config;
  TrainResult classical;
};

/// 4 classes, 150 train / 50 test frames each, 5 epochs of classical training.
const TrainedFixture& trained_fixture();

}  // namespace rfadv::testkit
