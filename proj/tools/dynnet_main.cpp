#include "dynnet/cli.hpp"

int main(int argc, char** argv) { return dynnet::cli::run(argc, argv); }
