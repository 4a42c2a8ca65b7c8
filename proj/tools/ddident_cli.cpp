#include "ddident/cli.hpp"

int main(int argc, char** argv) { return ddident::cli_main(argc, argv); }
