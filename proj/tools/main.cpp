#include <iostream>
#include <string>
#include <vector>

#include "hoigraph/commands.hpp"
#include "hoigraph/runtime.hpp"

int main(int argc, char** argv) {
  hoigraph::tune_allocator();
  return hoigraph::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
