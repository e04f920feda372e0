#include <iostream>

#include "fracpq/app.hpp"

int main(int argc, char** argv) { return fracpq::app::run(argc, argv, {std::cout, std::cerr}); }
