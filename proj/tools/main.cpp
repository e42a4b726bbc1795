#include <iostream>
#include <string>
#include <vector>

#include "cpbo/cli.hpp"

int main(int argc, char** argv) {
  return cpbo::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
