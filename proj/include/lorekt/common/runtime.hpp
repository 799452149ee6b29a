#pragma once

namespace lorekt {

// Keeps freed tensor buffers in the heap instead of returning them to the OS
// after every op. Training spends a third of its time in page faults otherwise.
void tune_allocator();

}  // namespace lorekt
