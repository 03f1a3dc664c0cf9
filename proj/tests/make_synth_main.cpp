// Regenerates the bundled synthetic dataset (data/synthetic). The files are
// checked in; run this only when the generator parameters change.
#include <iostream>

#include "support/synth.hpp"

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "data/synthetic";
  tcqa::testsupport::SynthConfig config;  // 200 entities, 8 relations, 10% test
  auto data = tcqa::testsupport::make_synth_dataset(config);
  tcqa::testsupport::write_synth_dataset(data, dir);
  std::cout << "train " << data.train.size() << ", valid " << data.valid.size()
            << ", test " << data.test.size() << ", type pairs " << data.types.size()
            << " -> " << dir << "\n";
  return 0;
}
