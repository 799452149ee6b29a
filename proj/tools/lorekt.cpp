#include "lorekt/cli/commands.hpp"
#include "lorekt/common/runtime.hpp"

int main(int argc, char** argv) {
  lorekt::tune_allocator();
  return lorekt::cli::main(argc, argv);
}
