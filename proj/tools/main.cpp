#include "mtbo/cli.hpp"

int main(int argc, char** argv) { return mtbo::run_cli(argc, argv); }
