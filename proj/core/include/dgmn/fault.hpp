#pragma once

namespace dgmn::testing {

// Deliberate defects for mutation-testing the verification suites.
enum class Fault {
  kNone,
  kBilinearBackwardSign,  // flips the sign of d(out)/d(coords)
};

void inject_fault(Fault f);
Fault active_fault();

class ScopedFault {
 public:
  explicit ScopedFault(Fault f) : previous_(active_fault()) { inject_fault(f); }
  ~ScopedFault() { inject_fault(previous_); }
  ScopedFault(const ScopedFault&) = delete;
  ScopedFault& operator=(const ScopedFault&) = delete;

 private:
  Fault previous_;
};

}  // namespace dgmn::testing
