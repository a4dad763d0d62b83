#pragma once

#include <atomic>

namespace fedbcs {

#if defined(FEDBCS_SINGLE_PRECISION)
using Real = float;
#else
using Real = double;
#endif

/// Checked mode turns on NaN/Inf guards at op boundaries and the
/// conjugate-symmetry assertion in the inverse DFT. Process-wide, on by
/// default.
bool checked_mode();
void set_checked_mode(bool enabled);

/// RAII toggle, restores the previous setting on scope exit.
class CheckedModeScope {
 public:
  explicit CheckedModeScope(bool enabled) : previous_(checked_mode()) {
    set_checked_mode(enabled);
  }
  ~CheckedModeScope() { set_checked_mode(previous_); }
  CheckedModeScope(const CheckedModeScope&) = delete;
  CheckedModeScope& operator=(const CheckedModeScope&) = delete;

 private:
  bool previous_;
};

}  // namespace fedbcs
