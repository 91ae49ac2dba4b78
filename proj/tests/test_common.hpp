#pragma once

// torch's glog-compat layer defines a CHECK macro; pull torch in first and
// drop the colliding names so doctest's asserts win in every test TU.
#include <torch/torch.h>

#ifdef CHECK
#undef CHECK
#endif
#ifdef DCHECK
#undef DCHECK
#endif

#include <doctest.h>
